"""PPO trainer for the packing engine, speaking its JSONL episode protocol."""

from .client import EngineClient, ProtocolError, spawn_engine
from .features import Features, featurize
from .network import NetConfig, NoValidAction, ObjectEncoder, PolicyNetwork
from .ppo import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "EngineClient", "ProtocolError", "spawn_engine",
    "Features", "featurize",
    "NetConfig", "NoValidAction", "ObjectEncoder", "PolicyNetwork",
    "TrainConfig", "evaluate", "train",
]
