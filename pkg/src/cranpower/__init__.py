"""Energy-efficiency simulator for downlink C-RAN transmission strategies.

Computes minimum-total-power transmission plans under the data-sharing and
compression strategies (plus two reference schemes) and reproduces their
energy-efficiency comparison through seeded Monte-Carlo sweeps.
"""

from .network import (ChannelRealization, ConfigurationError, NetworkTopology,
                      SimulationParams, build_hex_topology, candidate_cluster,
                      draw_channel, drop_users, wraparound_distance)
from .power import (ActivityVector, PowerBreakdown, backhaul_power, bs_power,
                    total_power)
from .solver import (QosInstance, SolverSolution, SolveStatus, compute_sinr,
                     solve_compression_subproblem, solve_weighted_power_min)
from .data_sharing import (DsResult, DsWeights, MmOptions, MmTrace,
                           extract_clusters, rate_to_sinr_target, reweight,
                           run_algorithm1, smoothed_ds_objective,
                           update_ds_weights)
from .compression import (CompResult, CompWeights, compression_backhaul_rate,
                          comp_surrogate_coeffs, run_algorithm2,
                          smoothed_comp_objective, update_comp_weights)
from .baselines import (Association, per_cell_comp, single_bs_assign,
                        single_bs_power_control)
from .harness import (AggregateRow, ExperimentConfig, ExperimentResult,
                      emit_outputs, run_experiment)

__version__ = "0.1.0"
