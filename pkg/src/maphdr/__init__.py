"""MAP-HDR: HDR video from alternating-exposure frames via low-rank background and kernel-regressed foreground."""
from .config import RunConfig, load_config
from .imaging import IrradianceFrame, LdrFrame, ResponseCurve, gamma_response
from .pipeline import SynthesisJob, synthesize_frame, synthesize_video

__version__ = "0.1.0"

__all__ = ["IrradianceFrame", "LdrFrame", "ResponseCurve", "RunConfig", "SynthesisJob", "gamma_response",
           "load_config", "synthesize_frame", "synthesize_video"]
