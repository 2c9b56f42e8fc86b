"""Event-driven simulation of the Prefetcher / EN / Data Store system."""

from richcache.sim.config import BackhaulParams, ConfigError, DwellError, SimulationConfig
from richcache.sim.engine import Simulation, run
from richcache.sim.perturb import apply_dwell_error, apply_path_skip, perturb_dwell
from richcache.sim.workload import ContentCatalog, draw_content_request, zipf_probs

__all__ = [
    "BackhaulParams",
    "ConfigError",
    "ContentCatalog",
    "DwellError",
    "Simulation",
    "SimulationConfig",
    "apply_dwell_error",
    "apply_path_skip",
    "draw_content_request",
    "perturb_dwell",
    "run",
    "zipf_probs",
]
