"""Scene text detection toolkit: rotated-box geometry, an RFB-decoder
detector, training losses, NMS post-processing and ICDAR-style evaluation."""

__version__ = "0.1.0"
