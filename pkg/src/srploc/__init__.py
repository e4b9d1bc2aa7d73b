"""SRP-PHAT sound-source localization with uniform and geometrically
sampled spatial grids."""

from .errors import ConfigError
from .geometry import (
    DEFAULT_SPEED_OF_SOUND,
    MicArray,
    PairFrame,
    SearchRegion,
    analytic_delay_m,
    enumerate_pairs,
    make_pair_frame,
    max_tdoa_samples,
    pair_frames,
    tdoa_at,
)
from .grids import (
    CoherentGrid,
    SensitivityMap,
    TdoaLut,
    UrgTable,
    apply_consistency_constraint,
    build_gsg,
    build_urg,
    sensitivity_stats,
    trace_hyperboloid,
)
from .gcc import FrameSet, GccFunction, GccSet, frame_stream, gcc_all_pairs, gcc_phat
from .localize import (
    LocationEstimate,
    PowerMap,
    argmax_policy,
    restrict_to_sensitivity,
    srp_gsg,
    srp_urg,
)
from .simulate import SimScene, noise_burst, synth_freefield, synth_ism_lite
from .evaluate import (
    CellZone,
    EvalCondition,
    EvalConfig,
    EvalReport,
    RectZone,
    evaluate,
    metrics,
    zone_from_sensitivity,
)

__all__ = [
    "FrameSet",
    "GccFunction",
    "GccSet",
    "frame_stream",
    "gcc_all_pairs",
    "gcc_phat",
    "LocationEstimate",
    "PowerMap",
    "argmax_policy",
    "restrict_to_sensitivity",
    "srp_gsg",
    "srp_urg",
    "SimScene",
    "noise_burst",
    "synth_freefield",
    "synth_ism_lite",
    "CellZone",
    "EvalCondition",
    "EvalConfig",
    "EvalReport",
    "RectZone",
    "evaluate",
    "metrics",
    "zone_from_sensitivity",
    "ConfigError",
    "DEFAULT_SPEED_OF_SOUND",
    "MicArray",
    "PairFrame",
    "SearchRegion",
    "analytic_delay_m",
    "enumerate_pairs",
    "make_pair_frame",
    "max_tdoa_samples",
    "pair_frames",
    "tdoa_at",
    "CoherentGrid",
    "SensitivityMap",
    "TdoaLut",
    "UrgTable",
    "apply_consistency_constraint",
    "build_gsg",
    "build_urg",
    "sensitivity_stats",
    "trace_hyperboloid",
]

__version__ = "0.1.0"
