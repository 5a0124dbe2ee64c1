"""Individual HRTF modeling toolkit.

Decomposes a measured HRTF set with spatial principal component analysis,
maps a small set of anthropometric measurements to the decomposition
weights with small neural networks, and synthesizes minimum-phase binaural
HRIRs for arbitrary source directions, with objective evaluation reports.
"""

__version__ = "0.1.0"
