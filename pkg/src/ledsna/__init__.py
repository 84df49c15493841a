"""Model-agnostic local explanations with dependency-aware sampling and a
kernel SVR surrogate, plus a weighted-ridge linear baseline."""

from .blackbox import (
    ConstantClassifier,
    HttpClassifier,
    LexiconSentimentClassifier,
    QuadraticLogitClassifier,
    SubprocessClassifier,
    builtin_quadratic_logit,
    parse_blackbox_spec,
    query,
)
from .core import (
    Instance,
    InterpretableSpace,
    all_ones_mask,
    image_space,
    recover_image,
    recover_text,
    text_space,
)
from .errors import BlackBoxError, ContractViolation, ConvergenceError, TransportError
from .metrics import FidelityReport, approx_error, r_squared
from .sampling import (
    DependencyGroups,
    PerturbationSet,
    build_perturbation_set,
    file_groups_provider,
    group_tokens,
    proximity,
    sample_connected,
    sample_groups,
    window_grouper,
)
from .segmentation import (
    SegmentGraph,
    SegmentMap,
    build_adjacency,
    grid_segment,
    segments_connected,
    slic_segment,
)
from .surrogate import (
    ExplainConfig,
    Explanation,
    KernelSpec,
    LinearModel,
    SvrModel,
    attribute,
    explain,
    explain_set,
    fit_ridge,
    fit_svr,
    kernel_eval,
    sample_for_space,
    svr_predict,
)

__version__ = "0.1.0"

__all__ = [
    "BlackBoxError",
    "ConstantClassifier",
    "ContractViolation",
    "ConvergenceError",
    "DependencyGroups",
    "ExplainConfig",
    "Explanation",
    "FidelityReport",
    "HttpClassifier",
    "Instance",
    "InterpretableSpace",
    "KernelSpec",
    "LexiconSentimentClassifier",
    "LinearModel",
    "PerturbationSet",
    "QuadraticLogitClassifier",
    "SegmentGraph",
    "SegmentMap",
    "SubprocessClassifier",
    "SvrModel",
    "TransportError",
    "all_ones_mask",
    "approx_error",
    "attribute",
    "build_adjacency",
    "build_perturbation_set",
    "builtin_quadratic_logit",
    "explain",
    "explain_set",
    "file_groups_provider",
    "fit_ridge",
    "fit_svr",
    "grid_segment",
    "group_tokens",
    "image_space",
    "kernel_eval",
    "parse_blackbox_spec",
    "proximity",
    "query",
    "r_squared",
    "recover_image",
    "recover_text",
    "sample_connected",
    "sample_for_space",
    "sample_groups",
    "segments_connected",
    "slic_segment",
    "svr_predict",
    "text_space",
    "window_grouper",
]
