"""Parametrically driven phonon-phonon interactions in multimode cQAD devices.

Effective beam-splitter couplings mediated by a bichromatically driven
transmon, coupled-mode and full Fock-space dynamics, two-mode tomography
and chevron fitting.
"""

__version__ = "0.1.0"
