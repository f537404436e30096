"""leakq: simulation and analytic bounds for self-discharging energy-storage queues."""

from .dynamics import (
    ChargingConstraints,
    QueueConfig,
    SlotPath,
    SlotRecord,
    backlog_dual_form,
    backlog_minmax,
    daily_to_slot_leakage,
    dual_transform,
    effective_net_charge,
    reference_path,
    simulate_path,
    step,
)
from .sources import (
    ConstPlusExpDemand,
    GaussianChargeModel,
    SupplyMinusDemand,
    TraceCharge,
    TraceSource,
    WeibullWind,
    WindSupplyModel,
    WindTurbineParams,
    load_trace,
    make_rng,
    sample_demand,
    sample_gaussian,
    sample_weibull_speed,
    turbine_power,
    wind_supply,
)
from .metrics import (
    EmpiricalCdf,
    MomentSummary,
    kr_distance,
    kr_lemma_checks,
    ks_statistic,
    moments,
    qq_pairs,
)
from .approx import (
    MAX_SKEW_NORMAL_SKEWNESS,
    BoundReport,
    MgfSpec,
    ReferenceMoments,
    Regime,
    classify_regime,
    clt_probe,
    fit_skew_normal,
    gaussian_loss_probs,
    gaussian_theta_star,
    kr_gap_bound,
    martingale_bounds,
    reference_moments,
    sample_reference_steady_state,
    skew_normal_loss_probs,
    theta_star,
)
from .engine import (
    ReplicationSummary,
    SimPlan,
    SteadyStateSummary,
    convergence_probe,
    dual_underflow_via_overflow,
    run,
    simulate_arrays,
)

__version__ = "0.1.0"
