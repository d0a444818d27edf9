"""Frame-wise piano sustain-pedal detection.

Thin re-export of the compiled extension. The pipeline mirrors the C++ CLI:
melspectrograms, a small CNN trained on synthesized pedal/no-pedal excerpt
pairs, pooled-activation transfer features, and an RBF-SVM frame classifier.
"""

from pedalnet._pedalnet import (
    Network,
    SvmModel,
    __version__,
    detect,
    extract_features,
    extract_frame_features,
    f_measure,
    frame_ground_truth,
    grid_search,
    load_network,
    load_svm,
    make_network_multi,
    make_network_single,
    melspectrogram,
    pedal_segments,
    strip_sustain,
    toy_passage,
    train_svm,
)

__all__ = [
    "Network",
    "SvmModel",
    "__version__",
    "detect",
    "extract_features",
    "extract_frame_features",
    "f_measure",
    "frame_ground_truth",
    "grid_search",
    "load_network",
    "load_svm",
    "make_network_multi",
    "make_network_single",
    "melspectrogram",
    "pedal_segments",
    "strip_sustain",
    "toy_passage",
    "train_svm",
]
