"""Flux, helicity and the Calabi invariant for exact 2-forms on M x S^1."""

from .exprlang import parse, evaluate, differentiate, to_text
from .geometry import Circle, DomainM, QuadratureSettings, annulus, disk
from .forms import FormOnM, FormOnQ, integrate, make_B, pullback, wedge, exterior_d
from .homology import gauge_loops, kappa_basis
from .gauge import vector_potential
from .invariants import calabi, flux, helicity, helicity_matrix

__version__ = "0.1.0"
