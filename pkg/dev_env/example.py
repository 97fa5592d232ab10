from pymetamat.design.expr import preset
from pymetamat.design.recipe import DesignParams, minimal_design
from pymetamat.helpers import combine_configs, setup_logger
from pymetamat.solvers.broker import SolverBroker
from pymetamat.solvers.field import solve_collocation, solve_effective, sup_distance
from typing import Dict, Any

env_config: Dict[str, Any] = combine_configs(load_dotenv=True)
logger = setup_logger("pymetamat")


params = DesignParams(
    k=float(env_config.get("k", 1.0)),
    n2=preset(env_config.get("preset", "ex1")),
    epsilon=float(env_config.get("eps", 0.5))
)

# Design
report = minimal_design(params)
for row in report.rows:
    print(row.m, row.M, row.a, row.E, row.k2E)

# Fields on a small lattice
small = DesignParams(k=params.k, n2=preset(env_config.get("preset", "ex1"), P=2), P=2)
lattice = small.lattice(1)
broker = SolverBroker(enable_logging=True)
effective = solve_effective(lattice, small, broker)
collocation = solve_collocation(lattice, small, broker)
print(sup_distance(effective, collocation))
