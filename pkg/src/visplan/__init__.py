"""visplan: level-set visibility fields, exact information gain, and greedy
vantage-point planning on 2-D/3-D occupancy grids."""

from .errors import (
    DegenerateMapError,
    EstimatorError,
    FormatError,
    GenerationFailureError,
    InvalidPolygonError,
    InvalidVantageError,
    NoCandidateError,
    OutOfDomainError,
    VisPlanError,
)
from .grid import (
    GridGeometry,
    OccupancyMap,
    ScalarField,
    heaviside,
    sample,
    signed_distance,
    smeared_delta,
)
from .visibility import (
    ExplorationState,
    Vantage,
    accumulate,
    initial_state,
    residual,
    shadow_boundary,
    visibility_field,
)
from .gain import ExactGainTracker, GainField, VisibilityTable, exact_gain_at, exact_gain_field
from .planner import (
    ExactEstimator,
    ExternalEstimator,
    GainEstimator,
    PlanTrace,
    RandomEstimator,
    StopRule,
    frequency_map,
    make_estimator,
    random_gain_field,
    run_episode,
    select_next,
)
from .scenes import (
    PolygonGallery,
    SceneRecipe,
    comb_gallery,
    convex_room,
    gallery_bounds,
    generate_scene,
    load_mask,
    load_polygon,
    rasterize_gallery,
    save_polygon,
)
from .dataset import (
    TrainingPair,
    emit_pair,
    generate_dataset,
    read_rfa,
    write_rfa,
)

__version__ = "0.1.0"
