"""Geometric-reasoning benchmark toolkit.

Three stimulus families (stroke-program shapes, regularity-graded
quadrilaterals, Euclidean construction concepts), a deterministic
rasterizer, an embedding provider protocol, embedding-space metrics,
and a from-scratch regression/REML engine, orchestrated by a CLI.
"""

__version__ = "0.1.0"
