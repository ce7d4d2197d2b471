"""Experiment configuration: one JSON document covering every subsystem.

Defaults reproduce the nominal experiment (full vehicle model, standard
disturbances, the published training hyperparameters). Unknown keys are
rejected everywhere so typos fail loudly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .env import EnvConfig
from .ppo import PpoConfig
from .rarl import RarlConfig
from .reference import DT_DEFAULT, GAMMA_REF, KAPPA_REF, LEG_LENGTH_DEFAULT
from .trim import V_NOM
from .vehicle import Vehicle


@dataclass
class PathsConfig:
    kappas: tuple = KAPPA_REF
    gammas: tuple = GAMMA_REF
    leg_length: float = LEG_LENGTH_DEFAULT
    dt: float = DT_DEFAULT
    v_nom: float = V_NOM

    @classmethod
    def from_dict(cls, data: dict) -> "PathsConfig":
        valid = {f.name for f in fields(cls)}
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown paths config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("kappas", "gammas"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class ExperimentConfig:
    seed: int = 0
    vehicle: Vehicle = field(default_factory=Vehicle)
    env: EnvConfig = field(default_factory=EnvConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    rarl: RarlConfig = field(default_factory=RarlConfig)

    SECTIONS = ("vehicle", "env", "paths", "ppo", "rarl")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.SECTIONS) - {"seed"}
        if unknown:
            raise ValueError(f"unknown experiment config sections: {sorted(unknown)}")
        return cls(
            seed=int(data.get("seed", 0)),
            vehicle=Vehicle.from_dict(data.get("vehicle", {})),
            env=EnvConfig.from_dict(data.get("env", {})),
            paths=PathsConfig.from_dict(data.get("paths", {})),
            ppo=PpoConfig.from_dict(data.get("ppo", {})),
            rarl=RarlConfig.from_dict(data.get("rarl", {})),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "vehicle": self.vehicle.to_dict(),
            "env": asdict(self.env),
            "paths": asdict(self.paths),
            "ppo": asdict(self.ppo),
            "rarl": asdict(self.rarl),
        }
        doc["env"]["error_bounds"] = list(self.env.error_bounds)
        return doc

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_jsonable)

    def digest(self) -> str:
        """Stable hash of the resolved configuration."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not JSON serializable: {type(value)}")
