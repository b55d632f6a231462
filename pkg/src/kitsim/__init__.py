"""Design and characterization toolkit for kinetic-inductance traveling-wave
parametric amplifiers (KITs).

Submodules
----------
cellmodel
    Stub-loaded unit-cell electricals, admittance fits, design curves.
cascade
    Unit-cell / supercell / device ABCD cascades, S-parameters, dispersion.
gainsim
    Analytic and coupled-mode-equation gain, pump sweeps, band metrics, ripple.
characterize
    Scaling/critical current, TDR and two-tone compression analysis.
noisecal
    Shot-noise tunnel junction calibrated system-noise analysis.
"""

from kitsim._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
