"""binfer: bit-exact execution engine for fully binarized neural networks
with streaming-hardware semantics, plus the folding / BRAM / latency /
roofline design-space models.

The packed engine (XNOR-popcount-threshold units, streaming -1 padding,
OR-pooling) is checked bit for bit against an independent signed-arithmetic
reference in :mod:`binfer.oracle`. Hot kernels run on a compiled core when
available and a numpy fallback otherwise; see :mod:`binfer._kernels`.
"""
from ._kernels import active_backend, available_backends
from .errors import (
    BinferError,
    FormatError,
    ScheduleInfeasibleError,
    UnsupportedPaddingError,
    ValidationError,
)
from .model import (
    BatchNormParams,
    BinaryLayer,
    BitTensor,
    Direction,
    IoMode,
    LayerGeometry,
    LayerKind,
    Padding,
    ThresholdEntry,
    ThresholdVector,
    Topology,
    build_topology,
    generate_random_model,
)
from .container import load_model, save_model
from .mvtu import (
    AccumulatorSpec,
    PopcountResult,
    compile_fixedpoint_thresholds,
    compile_thresholds,
    mvtu_execute,
    mvtu_execute_multi,
    mvtu_fixedpoint,
    mvtu_raw,
    xnor_popcount,
)
from .pipeline import (
    ClassificationResult,
    Model,
    OpCountReport,
    count_ops,
    run_batch,
    run_network,
    validate_model,
    verify_equivalence,
)
from .pool import line_buffer_pool, or_pool
from .scheduler import FoldingConfig, ScheduleReport, ii_of, rate_balance_check, schedule
from .swu import build_window_plan, generate_image_matrix, interleave_filters, stream_pad_write
from .resources import (
    BramReport,
    DeviceModel,
    RooflineReport,
    bram_estimate,
    kfps_table,
    latency_estimate,
    load_device,
    roofline,
)

__version__ = "0.1.0"

__all__ = [
    "AccumulatorSpec",
    "BatchNormParams",
    "BinaryLayer",
    "BinferError",
    "BitTensor",
    "BramReport",
    "ClassificationResult",
    "DeviceModel",
    "Direction",
    "FoldingConfig",
    "FormatError",
    "IoMode",
    "LayerGeometry",
    "LayerKind",
    "Model",
    "OpCountReport",
    "Padding",
    "PopcountResult",
    "RooflineReport",
    "ScheduleInfeasibleError",
    "ScheduleReport",
    "ThresholdEntry",
    "ThresholdVector",
    "Topology",
    "UnsupportedPaddingError",
    "ValidationError",
    "active_backend",
    "available_backends",
    "bram_estimate",
    "build_topology",
    "build_window_plan",
    "compile_fixedpoint_thresholds",
    "compile_thresholds",
    "count_ops",
    "generate_image_matrix",
    "generate_random_model",
    "ii_of",
    "interleave_filters",
    "kfps_table",
    "latency_estimate",
    "line_buffer_pool",
    "load_device",
    "load_model",
    "mvtu_execute",
    "mvtu_execute_multi",
    "mvtu_fixedpoint",
    "mvtu_raw",
    "or_pool",
    "rate_balance_check",
    "roofline",
    "run_batch",
    "run_network",
    "save_model",
    "schedule",
    "stream_pad_write",
    "validate_model",
    "verify_equivalence",
    "xnor_popcount",
]
