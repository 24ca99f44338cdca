"""Link-level OFDM simulation and end-to-end waveform learning toolkit.

The package covers a complete simulated downlink: OFDM modulation with a
cyclic prefix, a memoryless polynomial power amplifier, time-varying tapped
delay line channels, conventional LS/LMMSE receivers with log-MAP demapping,
and a small numpy-based autodiff stack for training a learned constellation,
a pre-distortion TX network, and a convolutional receiver against bit error
rate and out-of-band emission objectives.
"""

from wavelink.grid import (
    Constellation,
    Numerology,
    ResourceGrid,
    build_qam_constellation,
    hard_demap,
    inband_bins,
    map_bits,
    normalize_constellation,
    oob_bins,
)

__all__ = [
    "Constellation",
    "Numerology",
    "ResourceGrid",
    "build_qam_constellation",
    "hard_demap",
    "inband_bins",
    "map_bits",
    "normalize_constellation",
    "oob_bins",
]

__version__ = "0.1.0"
