# Design layer
from pymetamat.design import (
    expr,
    geometry,
    recipe,
    tables,
)

# Solver layer
from pymetamat.solvers import (
    broker,
    field,
)

# Export the modules and re-exports
__all__ = [
    "broker",
    "expr",
    "field",
    "geometry",
    "recipe",
    "tables",
]
