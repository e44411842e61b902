"""Cut-in driving behavior policies, rare-event estimation and model fitting."""

__version__ = "0.1.0"

from .errors import (
    AbsoluteContinuityError,
    AmbiguousCategoryError,
    ConfigError,
    CutinsimError,
    DataError,
    DegenerateGridError,
    DomainError,
    InfeasibleScenarioError,
    NumericalError,
    StallError,
)
from .policy import (
    CATEGORIES,
    CATEGORY_SIGNS,
    LAMBDA_MAX,
    CutInAction,
    MixedPolicyParams,
    RationalityVector,
    SubjectState,
    UtilitySpec,
    behavior_category_of,
    component_cdf,
    component_cdf_inverse,
    component_density,
    mixed_density,
    mixture_density,
    sample_lambda_in_category,
    ttc_of,
    utility_gap,
    utility_progress,
    utility_ttc,
)
from .grid import ActionGrid, GridSpec, build_action_grid, sample_action
from .scenario import (
    DiscreteSpeedDist,
    KraussParams,
    RareEventSpec,
    Scene,
    ScenarioConfig,
    Trajectory,
    VehicleState,
    is_rare_event,
    krauss_safe_speed,
    rollout,
    simulate_scene,
    step_follower,
)
from .estimators import (
    EstimateResult,
    GridProposal,
    cmc_estimate,
    grid_oracle,
    is_estimate,
    nominal_proposal,
    optimal_proposal,
    required_sample_size,
    verify_absolute_continuity,
)
from .cross_entropy import CEParams, CEResult, ce_optimize, proposal_from_theta
from .annealing import SAConfig, SAResult, optimize
from .observations import (
    SPEED_BANDS,
    ObservationSet,
    band_of,
    read_observations,
    write_observations,
)
from .behavior_model import (
    FitResult,
    MixedBehaviorModel,
    QQResult,
    empirical_cdf,
    filter_categories,
    fit_params,
    generate_situations,
    model_cdf,
    model_quantile,
    qq_points,
)
from .synthetic import BandSpec, SyntheticDatasetSpec, synthesize
from .presets import (
    TOY_NOMINAL_PARAMS,
    demo_synthetic_spec,
    rig_sa_config,
    rig_scene,
    toy_ce_params,
    toy_sa_config,
    toy_scene,
)
from .config import (
    EstimatorSettings,
    FitSettings,
    RunConfig,
    apply_overrides,
    default_config,
    load_config,
)
from .serialize import dumps_json, load_json, save_json
