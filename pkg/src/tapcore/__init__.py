"""Transport-and-pack simulation engine.

Generates cluttered box scenes with precedence constraints, exposes a
step-based packing environment over candidate empty maximal spaces, and
ships reference policies, benchmark generators, and a line-delimited
JSON protocol for external policies.
"""

from .benchmark import (DEFAULT_DIST, gen_fix, gen_ppsg, gen_rand,
                        generate_dataset, quantize_dims, replay_solution)
from .container import Mode, PackingSession, validity_mask
from .env import (EpisodeConfig, EpisodeRecord, Observation, PackEnv,
                  replay_record, run_episode)
from .ems import Ems, extract_all, extract_constrained, extract_original
from .errors import (ContractViolation, InvalidActionError, ProtocolError,
                     ReplayError, SceneGenerationError, SessionError)
from .geometry import (N_STATES, ContainerSpec, Dims3, HeightMap, grasp_axis,
                       orient_dims)
from .policies import GreedyEmsPolicy, RandomValidPolicy, make_policy
from .scene import (PrecedenceGraph, Scene, SceneBox, accessibility_table,
                    accessible, extract_graph, generate_scene)

__version__ = "0.1.0"

__all__ = [
    "ContainerSpec", "ContractViolation", "DEFAULT_DIST", "Dims3", "Ems",
    "EpisodeConfig", "EpisodeRecord", "GreedyEmsPolicy", "HeightMap",
    "InvalidActionError", "Mode", "N_STATES", "Observation", "PackEnv",
    "PackingSession", "PrecedenceGraph", "ProtocolError", "RandomValidPolicy",
    "ReplayError", "Scene", "SceneBox", "SceneGenerationError", "SessionError",
    "accessibility_table", "accessible", "extract_all", "extract_constrained",
    "extract_graph", "extract_original", "gen_fix", "gen_ppsg", "gen_rand",
    "generate_dataset", "generate_scene", "grasp_axis", "make_policy",
    "orient_dims", "quantize_dims", "replay_record", "replay_solution",
    "run_episode", "validity_mask",
]
