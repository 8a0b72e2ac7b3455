"""Learned multi-agent routing over folded task signatures.

Modules:
    signature    task features, regimes, handoff state, beliefs, signatures
    graph        persistent (signature, action) table with reliability-aware UCB1
    router       activation plan, legal actions, termination and the run loop
    reward       relative judging, cross-judge averaging, hybrid reward
    sim          synthetic corpus, planted environment and simulated judges
    experiments  four-arm protocol, audit, per-class and warm-start reports
"""

__version__ = "0.1.0"

from .config import Config, load_config
from .graph import ActionId, PolicyGraph, anneal_exploration, backup, select_action, ucb_score
from .reward import AxisScores, cross_judge, hybrid_reward
from .router import RouterConfig, default_pool, run_task
from .signature import Signature, TaskFeatures, fold_signature
from .sim import EnvConfig, SimEnv
from .experiments import retry_pipeline_success, run_protocol

__all__ = [
    "ActionId",
    "AxisScores",
    "Config",
    "EnvConfig",
    "PolicyGraph",
    "RouterConfig",
    "Signature",
    "SimEnv",
    "TaskFeatures",
    "anneal_exploration",
    "backup",
    "cross_judge",
    "default_pool",
    "fold_signature",
    "hybrid_reward",
    "load_config",
    "retry_pipeline_success",
    "run_protocol",
    "run_task",
    "select_action",
    "ucb_score",
]
