"""scenegate: language-gated distractor removal for robot camera streams.

The pipeline parses a task instruction into safe and distractor concept
sets, segments both independently, refines the target channel with a
two-layer confidence/connectivity analysis, composes a set-theoretic
inpainting mask that can never touch the safe set, inpaints once, and then
composites every later frame against the cached clean background with a
bit-exact robot overwrite.
"""

from .compositor import Episode, EpisodeReport, EpisodeState, FrameInput, blend_frames
from .distiller import CleanScene, GatingConfig, SceneDistiller, compose_gate, compose_inpaint_mask
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    DimensionMismatch,
    EmptyPhrase,
    EpisodeAlreadyInitialized,
    InvalidConfig,
    NoTargetFound,
    PlacementInfeasible,
    ProtocolError,
    SceneGateError,
    UninitializedEpisode,
    UnknownDomain,
    UnsupportedTemplate,
)
from .instructions import (
    ConceptDecomposition,
    decompose,
    default_grammar,
    default_lexicon,
    normalize_instruction,
    parse_instruction,
)
from .masks import (
    ConnectedComponent,
    binarize,
    connected_components,
    dilate,
    gaussian_blur,
    intersect,
    iou,
    subtract,
    union,
)
from .refinement import (
    ComponentScore,
    RefinementConfig,
    ScoredInstance,
    cross_validate,
    refine_target,
    select_component,
)
from .segmentation import (
    ConfusionModel,
    DetectionRule,
    Instance,
    MockSceneObject,
    MockSegmentationBackend,
    segment_set,
    union_channel,
)

__version__ = "0.1.0"
