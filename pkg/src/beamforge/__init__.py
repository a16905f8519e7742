"""beamforge: invariant-based design and simulation of single-ion extraction
from a Paul trap, from control waveforms down to the beam spot."""

__version__ = "0.1.0"
