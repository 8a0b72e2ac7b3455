"""Top-level configuration: one YAML/JSON document with per-module sections."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Tuple

import yaml

from .reward import RewardConfig
from .router import RouterConfig, VariantPool, default_pool
from .signature import SignatureConfig
from .sim import EnvConfig, default_env_config, transfer_source_config


@dataclass
class ExperimentSettings:
    tasks: int = 60
    epochs: int = 8
    arms: Tuple[str, ...] = ("baseline", "no_skip", "main", "warm_start")
    audit_judges: int = 3
    live_judge: str = "judge_a"
    warm_discount: float = 1.0
    source_epochs: int = 8
    warm_source: Optional[str] = None

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "ExperimentSettings":
        d = dict(d or {})
        if "arms" in d:
            d["arms"] = tuple(d["arms"])
        return cls(**d)


@dataclass
class Config:
    signature: SignatureConfig = field(default_factory=SignatureConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    env: EnvConfig = field(default_factory=default_env_config)
    source_env: EnvConfig = field(default_factory=transfer_source_config)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    pool: VariantPool = field(default_factory=default_pool)

    @classmethod
    def from_dict(cls, data: Optional[Mapping], base_dir: Optional[Path] = None) -> "Config":
        data = dict(data or {})

        def env_section(value, default):
            if value is None:
                return default()
            if isinstance(value, str):
                path = Path(value)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                value = yaml.safe_load(path.read_text())
            return EnvConfig.from_dict(value)

        reward = dict(data.get("reward") or {})
        router = dict(data.get("router") or {})
        # a single token cap feeds both the reward normalisation and the run budget
        if "token_cap" in reward and "token_cap" not in router:
            router["token_cap"] = reward["token_cap"]
        return cls(
            signature=SignatureConfig.from_dict(data.get("signature")),
            router=RouterConfig.from_dict(router),
            reward=RewardConfig.from_dict(reward),
            env=env_section(data.get("env"), default_env_config),
            source_env=env_section(data.get("source_env"), transfer_source_config),
            experiment=ExperimentSettings.from_dict(data.get("experiment")),
            pool=VariantPool.from_dict(data["pool"]) if "pool" in data else default_pool(),
        )

    def to_dict(self) -> dict:
        sig = self.signature
        return {
            "signature": {
                "granularity": sig.granularity,
                "initial_beliefs": asdict(sig.initial_beliefs),
                "belief_deltas": sig.belief_deltas,
                "regime_rules": asdict(sig.regime_rules),
            },
            "router": {
                "max_steps": self.router.max_steps,
                "token_cap": self.router.token_cap,
                "max_retries": self.router.max_retries,
                "reliability_weight": self.router.reliability_weight,
                "governance": {
                    "max_consecutive_failures": self.router.governance.max_consecutive_failures,
                    "forbidden_cells": sorted(self.router.governance.forbidden_cells),
                    "hard_token_ceiling": self.router.governance.hard_token_ceiling,
                },
            },
            "reward": {
                **asdict(self.reward.weights),
                "axis_weights": list(self.reward.axis_weights),
                "sigma_max": self.reward.sigma_max,
                "judges": list(self.reward.judges),
            },
            "env": self.env.to_dict(),
            "source_env": self.source_env.to_dict(),
            "experiment": {**asdict(self.experiment), "arms": list(self.experiment.arms)},
            "pool": self.pool.to_dict(),
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    return Config.from_dict(yaml.safe_load(path.read_text()), base_dir=path.parent)
