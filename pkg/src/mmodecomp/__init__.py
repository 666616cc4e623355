"""Singular return-map decomposition of mixed-mode oscillations.

Subpackages compute singular-limit flow maps for the Koper model, fit them
with affine/quadratic models, analyze the resulting oscillation
transitions, and run a decoupled local-global hybrid simulator built from
folded-node / singular-Hopf normal forms plus abstract return maps.
"""

__version__ = "0.1.0"
