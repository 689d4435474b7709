"""Online corner-case detection for autonomous driving by monitoring the
disagreement between a primary modular planner and a secondary end-to-end
style predictor, plus a deterministic desk-scale scenario simulator."""

from .errors import (
    AlignmentSkew,
    CalibrationError,
    ConfigError,
    NonMonotonicProjection,
    ParseError,
    PathTooShort,
    PlanwatchError,
    ProfileMismatch,
    UnorderedInput,
)
from .geometry import (
    Projection,
    lateral_profile,
    point_at,
    project_point,
    project_points,
    resample_uniform,
)
from .lateral import LateralRunDetector, detect_lateral, lat_avg, lat_max, lat_score
from .longitudinal import (
    LongitudinalMonitor,
    LongitudinalSample,
    delta_sc,
    delta_v,
    detect_longitudinal,
    long_flag,
)
from .pipeline import (
    AlignedFrame,
    AlignmentResult,
    DetectionPipeline,
    DetectionResult,
    align_streams,
    response_policy,
    run_detection,
)
from .replay import (
    CalibrationReport,
    ReplayResult,
    calibrate,
    format_calibration_report,
    replay,
    write_metrics_csv,
)
from .runlog import (
    E2ePlanRecord,
    EventRecord,
    InterventionRecord,
    LogHeader,
    ModularPlanRecord,
    ProfileRecord,
    RunLog,
    SpeedClassRecord,
    WorldRecord,
    quantize_stamp,
    read_log,
    write_log,
)
from .scenarios import (
    BUNDLED,
    ObstacleRect,
    PedestrianScript,
    Scenario,
    bundled_names,
    load_scenario,
    parse_scenario_text,
    scenario_to_text,
)
from .sim import (
    SimParams,
    WorldState,
    e2e_stub,
    modular_planner_stub,
    run_scenario,
    step_bicycle,
    target_points,
)
from .types import (
    CornerCaseEvent,
    DetectorConfig,
    EventKind,
    LateralProfile,
    LateralScore,
    PlanSample,
    Pose2D,
    ReferencePath,
    ResponseAction,
    ResponseLevel,
    SpeedClass,
    SpeedClassSample,
    Trajectory,
    TrajectoryPoint,
    TrajectorySource,
    path_from_xy,
    validate_config,
    wrap_angle,
)

__version__ = "0.1.0"
