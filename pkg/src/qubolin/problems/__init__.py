from .generators import (
    InferenceInstance,
    double_constraint_problem,
    gen_double_constraint,
    gen_kmin,
    gen_linear_system,
    gen_number_partition,
    gen_structured_cs,
    grid_edges,
    grid_prior,
    number_partition_problem,
    partition_numbers,
    partition_residual_unit,
    random_blob,
    spectral_linearize,
)
from .oracles import BRUTE_FORCE_MAX_VARS, InfeasibleError, brute_force, hungarian_oracle, kmin_oracle
from .traffic import (
    TrafficInstance,
    deterministic_baseline,
    gen_traffic,
    instance_from_routes,
    linearize_traffic,
    shortest_path_baseline,
    traffic_problem,
)
from .io import INSTANCE_SCHEMA, instance_from_dict, instance_to_dict
