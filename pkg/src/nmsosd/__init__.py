"""Channel-coding workbench: iterative first stage, ordered-statistics
second stage, and the small learned gates that connect them."""

__version__ = "0.1.0"

from .channel import ChannelConfig, Frame, llr, modulate, sigma_from_snr, transmit
from .codes import CodeSpec, by_name, known_codes
from .gf2 import Gf2Matrix, Permutation, load_alist, parse_alist, save_alist
from .models import DiaModel, GateConfig, SwaModel, UdeModel
from .nms import DecodeTrajectory, NmsParams, TannerGraph, decode_enhanced, decode_standard
from .osd import OsdProblem, Tep, osd_order_p, traverse_with_swa
from .path import LambdaVector, PathBuffer, almlt_order, cvt_order, estimate_lambda
from .pipeline import FrameOutcome, HybridConfig, HybridRunner, OsdMode, hybrid_decode
from .simulate import ComplexityModel, SimReport, monte_carlo, wilson_interval

__all__ = [
    "ChannelConfig", "Frame", "llr", "modulate", "sigma_from_snr", "transmit",
    "CodeSpec", "by_name", "known_codes",
    "Gf2Matrix", "Permutation", "load_alist", "parse_alist", "save_alist",
    "DiaModel", "GateConfig", "SwaModel", "UdeModel",
    "DecodeTrajectory", "NmsParams", "TannerGraph", "decode_enhanced",
    "decode_standard",
    "OsdProblem", "Tep", "osd_order_p", "traverse_with_swa",
    "LambdaVector", "PathBuffer", "almlt_order", "cvt_order", "estimate_lambda",
    "FrameOutcome", "HybridConfig", "HybridRunner", "OsdMode", "hybrid_decode",
    "ComplexityModel", "SimReport", "monte_carlo", "wilson_interval",
    "__version__",
]
