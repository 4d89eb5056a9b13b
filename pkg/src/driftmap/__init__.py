"""Read-disturb drift modeling and drift-aware synapse mapping for OxRRAM
crossbar inference hardware."""

from .circuit import (CellEnvironment, CrossbarConfig, TechNodeParams,
                      TECH_TABLE, calibrate_rcell, calibrate_reference_nodal,
                      corner_current_difference, nodal_environment,
                      path_resistance, series_cell_state, series_environment,
                      solve_nodal, voltage_map_stats)
from .disturb import (CellState, DisturbParams, TransitionEvent,
                      accumulate_stress, calibrate_hrs, default_params,
                      hrs_closed_form_time, hrs_transition_time,
                      inference_lifetime, lrs_transition_time,
                      transition_time, transition_time_for_level)
from .errors import (ConvergenceError, DriftmapError, InfeasibleError,
                     ValidationError)
from .mapper import (ClusterMapping, LifetimeInstance, MappingSolution,
                     aggregate_trpi, assignment_indicators, build_instance,
                     lifetime_tensor, linearization_holds, solution_tau,
                     solve_cluster, solve_endurer, solve_exact, solve_maxmin,
                     solve_random)
from .model import (Dataset, InferenceResult, LevelEncoding, Neuron, Sample,
                    SnnModel, Synapse, accuracy, generate_synthetic,
                    load_dataset, load_model, perturb_model, run_inference,
                    run_inference_batch)
from .partition import (Cluster, cut_cost, partition_model, validate_clusters)
from .profiler import (CriticalityReport, SpikeProfile, classify_criticality,
                       effective_eta, profile_spikes)
from .simulate import (Mapping, ReprogramCostModel, ReprogramPolicy,
                       SimulationReport, compare_modes, estimate_trpt,
                       run_simulation)

__version__ = "0.1.0"
