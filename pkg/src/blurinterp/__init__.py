"""Joint video deblurring and multi-frame interpolation in numpy."""

from .backbone import BaselineOut, baseline_forward
from .boost import LossReport, compute_losses, recursive_boost
from .degrade import DegradeSpec, FrameSequence, synth_blur
from .metrics import evaluate, psnr, ssim, tof
from .pipeline import infer_sequence, interpolate_quadruple
from .tensor import ConvSpec, conv2d
from .warp import TriFlow, backward_warp, fwb, pwb
from .weights import WeightStore, load_weights, save_weights, xavier_init

__version__ = "0.1.0"
