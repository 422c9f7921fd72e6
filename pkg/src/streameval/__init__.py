"""Latency-aware object-detection evaluation harness.

Core surfaces: box geometry (IoU/GIoU/size classes), COCO-format dataset
tooling (merge, subsample, histograms, resampling weights, anchor
clustering), a discrete-event stream simulator, offline and streaming AP
evaluation, convolution-branch fusion numerics, scaled dot-product
attention, Lookahead optimization, and Mosaic/Mixup box geometry.
"""

from .geometry import BBox, SizeClass, area, area_class, giou, iou, size_class
from .datasets import (
    ARGOVERSE_CATEGORIES,
    AnchorSet,
    ClassHistogram,
    Dataset,
    FrameRecord,
    GtAnnotation,
    class_histogram,
    class_loss_weights,
    cluster_anchors,
    inverse_freq_sample_weights,
    load_coco,
    merge,
    subsample_stride,
)
from .stream import (
    ConstantLatency,
    Detection,
    LognormalLatency,
    PredictionSnapshot,
    PredictionTimeline,
    SchedulePolicy,
    StreamConfig,
    TraceLatency,
    frame_time,
    sample_latency,
    simulate,
)
from .evaluation import (
    EvalConfig,
    EvalResult,
    coco_ap,
    offline_ap,
    pair_offline,
    pair_streaming,
    streaming_ap,
)
from .fusion import (
    BNSpec,
    Branch,
    BranchBlock,
    ConvSpec,
    FusedConv,
    conv2d_direct,
    count_flops,
    count_params,
    fold_bn,
    fuse_block,
    fuse_branches,
    identity_to_3x3,
    pad_1x1_to_3x3,
)
from .attention import (
    LayerConfig,
    ProjectionSet,
    TransformerLayerWeights,
    attention_weights,
    project,
    scaled_attention,
    transformer_layer,
)
from .optimizers import (
    Adam,
    Lookahead,
    LookaheadConfig,
    SGD,
    adam_step,
    lookahead_run,
    run_benchmark,
    sgd_step,
)
from .augment import AnnotatedImage, MixupConfig, MosaicConfig, gate, mixup, mosaic
from .synth import ObjectTrack, Scenario, generate_scenario, write_scenario

__version__ = "0.1.0"
