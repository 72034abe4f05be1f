"""Privacy-preserving room-occupancy pipeline for ceiling omnidirectional cameras.

The package covers the full sensing chain: unwarping the circular fisheye
image into perspective fragments, harvesting detections from external
detector processes into self-training annotations, degrading frames to
extreme low resolutions, reconstructing detector input by interlacing
pixels from multiple past frames, and scoring the result with PR-curve
and counting metrics.
"""

__version__ = "0.1.0"
