"""Chern forms of glued connection families and their regularized currents.

The package realizes, numerically and at desk scale, the passage from
locally defined superconnection-type data on bounded domains in C^n to
global characteristic forms, and from those to currents:

* graded differential forms with extra simplex variables and fiber
  integration over standard simplices (``forms``),
* bounded complexes of trivial bundles, minimal inverses, the corrected
  connection families attached to a surjective-away-from-Z complex or to
  a singular foliation, and their cutoff regularizations (``complexes``),
* covers, partitions of unity, non-alternating Cech-de Rham cochains,
  glued simplicial connection families and the collapse to global forms,
  plus transgressions between two choices (``cechgreen``),
* pairings of the regularized forms against test forms, epsilon ladders,
  extrapolation to the limit current, and closed-form oracles
  (``residues``),
* a scenario-file driver (``cli``).
"""

from . import (cechgreen, complexes, fields, forms, jets, quadrature,
               report, residues, scenario, verify)

__all__ = [
    "jets",
    "fields",
    "forms",
    "quadrature",
    "complexes",
    "cechgreen",
    "residues",
    "scenario",
    "report",
    "verify",
]

__version__ = "0.1.0"
