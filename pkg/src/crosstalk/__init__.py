"""crosstalk: audio-visual active speaker detection at desk scale.

The model interleaves long-term per-speaker attention (temporal
self-attention plus audio-visual cross-attention) with short-term
inter-speaker convolution over the speaker x time grid, and is trained end
to end on a built-in synthetic conversation simulator.
"""

from .autodiff import Graph, Tensor, backward, recording
from .optim import Adam

__all__ = ["Adam", "Graph", "Tensor", "backward", "recording"]

__version__ = "0.1.0"
