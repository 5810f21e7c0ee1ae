"""Asymptotic 1/N^2 expansions of traces of polynomials in Haar unitary matrices."""

from . import expansion, freetrace, fubm, harness, indexsets, ncalg, rmt, weingarten
from .expansion import FourierSpec, QuadratureConfig, alpha
from .harness import ExperimentConfig, parse_poly
from .ncalg import NCPoly, U, V, Y, Z

__all__ = [
    "expansion", "freetrace", "fubm", "harness", "indexsets", "ncalg", "rmt", "weingarten",
    "FourierSpec", "QuadratureConfig", "alpha", "ExperimentConfig", "parse_poly",
    "NCPoly", "U", "V", "Y", "Z",
]

__version__ = "0.1.0"
