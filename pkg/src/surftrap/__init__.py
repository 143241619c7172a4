"""surftrap: design and analysis toolkit for planar multi-site ion trap arrays.

The package models planar electrode patterns in the gapless approximation,
computes trapping fields, pseudopotentials and normal modes, synthesizes
minimum-norm control voltage sets, optimizes RF electrode shapes by linear
programming, generates arbitrary-waveform ramps, and forward-simulates the
standard calibration experiments (sideband flopping, thermometry, heating,
resonant excitation, micromotion, state detection).
"""

__version__ = "0.1.0"
