"""Declarative run configuration with a versioned JSON schema.

A run config is a single JSON document; unknown keys are rejected anywhere
in the tree.  The observation dimension is derived from the scenario (2 for
hidden, 3 otherwise), never specified by hand.

Example::

    {
      "schema_version": 1,
      "seed": 0,
      "total_env_steps": 30000,
      "eval_every_steps": 1000,
      "eval_episodes": 10,
      "variant": {"kind": "lstm_1ha1hc", "l": 10},
      "scenario": {"kind": "noise", "sigma": 0.5},
      "hyperparams": {"batch_size": 64}
    }
"""

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .agents import Hyperparams, VariantSpec
from .disturbances import DisturbanceSpec, obs_dim

SCHEMA_VERSION = 1

_VARIANT_KEYS = {"kind", "l", "include_action"}
_SCENARIO_KEYS = {
    "none": {"kind"},
    "temporal_bias": {"kind", "amp_lo", "amp_hi", "bias_count", "bias_duration"},
    "temporal_sine": {"kind", "amp", "period"},
    "random_sine": {"kind", "rand_amp_lo", "rand_amp_hi", "period_lo", "period_hi"},
    "comb_sine": {"kind", "rand_amp_lo", "rand_amp_hi", "period_lo", "period_hi"},
    "damped_sine": {"kind", "rand_amp_lo", "rand_amp_hi", "period_lo", "period_hi"},
    "noise": {"kind", "sigma"},
    "hidden": {"kind"},
}
_RUN_KEYS = {
    "schema_version", "seed", "total_env_steps", "eval_every_steps",
    "eval_episodes", "variant", "scenario", "hyperparams", "out_dir",
}


class ConfigError(ValueError):
    pass


def _reject_unknown(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def variant_from_dict(d, scenario):
    _reject_unknown(d, _VARIANT_KEYS, "variant")
    if "kind" not in d:
        raise ConfigError("variant.kind is required")
    try:
        return VariantSpec(
            kind=d["kind"],
            include_action=d.get("include_action", True),
            l=d.get("l", 3),
            obs_dim=obs_dim(scenario),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def scenario_from_dict(d):
    kind = d.get("kind", "none")
    if kind not in _SCENARIO_KEYS:
        raise ConfigError(f"unknown scenario kind {kind!r}")
    _reject_unknown(d, _SCENARIO_KEYS[kind], f"scenario {kind!r}")
    try:
        return DisturbanceSpec(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def hyper_from_dict(d):
    allowed = set(Hyperparams.__dataclass_fields__)
    _reject_unknown(d, allowed, "hyperparams")
    try:
        return Hyperparams(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunConfig:
    variant: VariantSpec
    scenario: DisturbanceSpec
    seed: int = 0
    total_env_steps: int = 30000
    eval_every_steps: int = 1000
    eval_episodes: int = 10
    hyper: Hyperparams = field(default_factory=Hyperparams)
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.total_env_steps < 0:
            raise ConfigError("total_env_steps must be >= 0")
        if self.eval_every_steps < 1 or self.eval_episodes < 1:
            raise ConfigError("eval cadence fields must be >= 1")
        if self.variant.obs_dim != obs_dim(self.scenario):
            raise ConfigError(
                f"variant obs_dim {self.variant.obs_dim} does not match "
                f"scenario {self.scenario.kind!r}"
            )

    @property
    def run_id(self):
        return (f"{self.variant.label}_{self.scenario.kind}"
                f"_l{self.variant.l}_s{self.seed}")

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "total_env_steps": self.total_env_steps,
            "eval_every_steps": self.eval_every_steps,
            "eval_episodes": self.eval_episodes,
            "variant": self.variant.config_dict(),
            "scenario": self.scenario.to_dict(),
            "hyperparams": self.hyper.to_dict(),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, _RUN_KEYS, "run config")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        scenario = scenario_from_dict(dict(d.get("scenario", {"kind": "none"})))
        variant = variant_from_dict(dict(d.get("variant", {})), scenario)
        return cls(
            variant=variant,
            scenario=scenario,
            seed=int(d.get("seed", 0)),
            total_env_steps=int(d.get("total_env_steps", 30000)),
            eval_every_steps=int(d.get("eval_every_steps", 1000)),
            eval_episodes=int(d.get("eval_episodes", 10)),
            hyper=hyper_from_dict(dict(d.get("hyperparams", {}))),
            out_dir=d.get("out_dir"),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)
