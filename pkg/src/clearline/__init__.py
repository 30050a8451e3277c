"""Selective plant-clearing pipeline around a pluggable detector.

Fuzzy annotation masks, a spectral-angle baseline classifier, detection
evaluation, n-frame temporal stabilization, tool retract/extend
scheduling, a deterministic field simulator and a flat-file annotation
datastore with an HTTP service.
"""

__version__ = "0.1.0"

from .masks import (
    Component,
    Detection,
    FuzzyMask,
    ImageGrid,
    erase_stroke,
    mask_to_detections,
    replay_strokes,
    spray_stroke,
    threshold_components,
)
from .enhance import ClaheParams, clahe, clahe_rgb
from .spectral import (
    ReferenceLibrary,
    SamResult,
    SpectralCube,
    Spectrum,
    classify_cube,
    sam_classify,
    spectral_angle,
)
from .evaluation import (
    GroundTruthSet,
    RocCurve,
    auroc,
    match_detections,
    max_accuracy,
    roc_curve,
    working_point,
)
from .stabilize import (
    CameraModel,
    OdometrySample,
    Stabilizer,
    StabilizerConfig,
    Track,
    WorldDetection,
    project_detection,
)
from .control import (
    ToolParams,
    ToolSchedule,
    plan_schedule,
    simulate_tool_state,
    verify_safety,
)
from .simulate import DetectorModel, FieldScenario, end_to_end, generate_field, run_detector
