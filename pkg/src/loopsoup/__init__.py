"""Non-backtracking loop soups on weighted graphs: exact partition functions,
loop enumeration oracles, Poisson samplers, occupation observables and spins."""

from .errors import (ConvergenceError, EnumerationLimitError, NotPositiveDefiniteError,
                     SupercriticalError, WrappingLoopError)
from .gibbs import brute_force_partition, gibbs_fit_test, hamiltonian, markov_independence_test, pairing_count
from .graph import (CutGraph, GraphError, TorusSpec, WeightedGraph, build_grid, build_torus, complete_graph,
                    cut_along, cycle_graph, glue, load_graph, save_graph)
from .loops import enumerate_loops, truncated_first_return, truncated_log_partition, truncated_two_point
from .observables import first_return, one_point_green, pgf, two_point_green
from .sampler import SoupSampler, sample_arcs, sample_fields, sample_soup
from .spin import Patch, reflection_gram, spin_experiment, spin_field
from .torus import block_spectrum, free_energy_limit, one_point_limit, singular_scan, torus_log_partition
from .transfer import (build_transfer, critical_margin, gff_correspondence, green, ihara_zeta, log_partition_det,
                       log_partition_vertex, spectral_radius)

__version__ = "0.1.0"
