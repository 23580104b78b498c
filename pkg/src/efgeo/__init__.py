"""efgeo: gauge- and coordinate-invariant exact-factorization geometry on
discretized configuration space.

Submodules:

* :mod:`efgeo.grids`        — axes, grids, finite-difference stencils, quadrature
* :mod:`efgeo.geometry`     — mass metrics, charts, connection symbols
* :mod:`efgeo.expressions`  — whitelisted expression compiler for model files
* :mod:`efgeo.models`       — built-in model systems and the JSON loader
* :mod:`efgeo.solver`       — full two-component eigensolver / propagator (oracle)
* :mod:`efgeo.factorization`— marginal/conditional split, gauge transforms, potentials
* :mod:`efgeo.ef_geometry`  — quantum geometric tensor, Christoffel objects, frames
* :mod:`efgeo.residuals`    — residual evaluators for the projected equations
* :mod:`efgeo.tolerances`   — named tolerance profiles
* :mod:`efgeo.io`           — CSV field serialization
* :mod:`efgeo.cli`          — the ``efgeo`` command-line front end
"""

__version__ = "0.1.0"
