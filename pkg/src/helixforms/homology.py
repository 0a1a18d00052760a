"""Fixed generators for the flux domain and the gauge subspaces on Q = M x S^1."""

from __future__ import annotations

from dataclasses import dataclass

from .forms import FiberLoop, FormOnQ, ProductChain, SliceChain, SliceLoop, integrate
from .geometry import DomainM, QuadratureSettings, boundary_circles, connecting_path


@dataclass(frozen=True, eq=False)
class ChainBasis:
    """M x {0} followed by Pi_{1k} = gamma_{1k} x S^1 for k = 2..d."""

    domain: DomainM
    chains: tuple
    labels: tuple[str, ...]

    def __len__(self):
        return len(self.chains)


def kappa_basis(dom: DomainM, quad: QuadratureSettings = QuadratureSettings()) -> ChainBasis:
    chains = [SliceChain(quad.mesh(dom), 0.0)]
    labels = ["M x {0}"]
    for k in range(2, dom.d + 1):
        chains.append(product_chain(dom, 1, k, quad))
        labels.append(f"Pi_1{k}")
    return ChainBasis(dom, tuple(chains), tuple(labels))


def product_chain(dom: DomainM, i: int, k: int,
                  quad: QuadratureSettings = QuadratureSettings()) -> ProductChain:
    """Pi_ik = gamma_ik x S^1."""
    return ProductChain(connecting_path(dom, i, k), quad.circle,
                        quad.curve_panels, quad.curve_order)


@dataclass(frozen=True, eq=False)
class GaugeSubspace:
    """Loops generating kappa-perp_{lk}: {x_k} x S^1 and S_i x {0} for i != l."""

    domain: DomainM
    ell: int
    k: int
    loops: tuple
    labels: tuple[str, ...]


def gauge_loops(dom: DomainM, ell: int, k: int,
                quad: QuadratureSettings = QuadratureSettings()) -> GaugeSubspace:
    for idx in (ell, k):
        if not 1 <= idx <= dom.d:
            raise IndexError(f"gauge index {idx} out of range 1..{dom.d}")
    loops = [FiberLoop(dom.anchor(k), quad.circle)]
    labels = [f"{{x_{k}}} x S^1"]
    for i, curve in enumerate(boundary_circles(dom), start=1):
        if i != ell:
            loops.append(SliceLoop(curve, 0.0, quad.curve_panels, quad.curve_order))
            labels.append(f"S_{i} x {{0}}")
    return GaugeSubspace(dom, ell, k, tuple(loops), tuple(labels))


def periods(A: FormOnQ, g: GaugeSubspace) -> list[float]:
    """Line integrals of a 1-form over the generating loops of ``g``."""
    if A.degree != 1:
        raise ValueError("periods are defined for 1-forms")
    return [integrate(A, loop) for loop in g.loops]
