"""Numerical laboratory for a Markovian local-field equation on regular trees.

The package studies the law of the root neighborhood (one root vertex plus
its ``kappa`` children) of an interacting diffusion on the kappa-regular
tree.  It provides

* tensor-product grids and quadrature (:mod:`mlfe.grid`),
* confining/interaction potential pairs (:mod:`mlfe.potentials`),
* discrete neighborhood densities and their marginals (:mod:`mlfe.measures`),
* free-energy and dissipation functionals (:mod:`mlfe.functionals`),
* the deterministic Fokker--Planck flow (:mod:`mlfe.flow`),
* the Cayley fixed-point solver for stationary laws (:mod:`mlfe.cayley`),
* transfer-operator diagnostics on the doubly infinite chain, kappa = 2
  (:mod:`mlfe.chain`),
* a stochastic particle mirror of the flow (:mod:`mlfe.particles`),
* a command-line interface (:mod:`mlfe.cli`).

Submodules import :mod:`numpy` lazily relative to the package root so the
CLI can configure threading before any numerical code loads.
"""

__version__ = "0.1.0"

__all__ = [
    "grid",
    "potentials",
    "measures",
    "functionals",
    "flow",
    "cayley",
    "chain",
    "particles",
    "plots",
    "cli",
]
