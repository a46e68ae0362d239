"""Energy of an indented elastic cone in the von Karman plate model.

Radially symmetric configurations are handled by :mod:`vkcone.radial`
(energy), :mod:`vkcone.constructions` (explicit competitors) and
:mod:`vkcone.minimize` (numerical minimizer); :mod:`vkcone.ridge` builds the
symmetry-breaking pyramid and :mod:`vkcone.scaling` runs parameter sweeps.
"""

__version__ = "0.1.0"

from .constructions import construct_flatten, construct_invert, predicted_bound
from .minimize import MinResult, minimize
from .radial import EnergyBreakdown, Grid, Params, RadialField, energy, make_grid
from .ridge import pyramid_energy, sharp_pyramid
from .scaling import SweepRecord, fit_exponent, sweep

__all__ = [
    "Params",
    "Grid",
    "RadialField",
    "EnergyBreakdown",
    "MinResult",
    "SweepRecord",
    "make_grid",
    "energy",
    "construct_invert",
    "construct_flatten",
    "predicted_bound",
    "minimize",
    "sharp_pyramid",
    "pyramid_energy",
    "sweep",
    "fit_exponent",
]
