"""Seed expansion of lockstep engagement groups by local spectral diffusion."""

from .diffusion import (
    AccompliceCluster,
    DiffusionVector,
    conductance,
    solve_l1,
    sweep_cut,
    validate_tabc,
)
from .graph import (
    EngagementGraph,
    apply_owner_penalty,
    build_graph,
    degree_histogram,
    read_graph_tsv,
    write_graph_tsv,
)
from .ingest import EngagementBipartite, EngagementEvent, parse_events, temporal_coherence
from .pipeline import RunConfig, flake_odf, internal_density, run_pipeline, tier_classify
from .sampler import Subgraph, sample_subgraph
from .spectral import LocalSpectra, krylov_basis, local_spectra, normalized_adjacency

__version__ = "0.1.0"
