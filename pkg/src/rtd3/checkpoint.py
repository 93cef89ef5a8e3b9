"""Actor checkpoints: the binary layout from ``binio`` with magic
``RTD3CKPT``, carrying the variant description, the training scenario and
the actor's named parameter arrays.  Loads are bit-exact."""

import numpy as np

from . import binio
from .agents import Agent, Hyperparams, VariantSpec

MAGIC = b"RTD3CKPT"
VERSION = 1


def save_actor(path, agent, scenario, seed, extra=None):
    meta = {
        "variant": agent.spec.to_dict(),
        "hidden": agent.spec.hidden,
        "scenario": scenario.to_dict(),
        "seed": seed,
    }
    if extra:
        meta.update(extra)
    binio.write_file(path, MAGIC, VERSION, meta, agent.actor.named_params())


def load_meta(path):
    _, meta, _ = binio.read_file(path, MAGIC, VERSION)
    return meta


def load_agent(path, hyper=None):
    """Rebuild an agent shell around the stored actor parameters.

    The critics and targets are freshly initialised; only the actor matters
    for evaluation.  Returns (agent, meta).
    """
    _, meta, arrays = binio.read_file(path, MAGIC, VERSION)
    v = dict(meta["variant"])
    spec = VariantSpec(
        kind=v["kind"],
        include_action=v.get("include_action", True),
        l=v["l"],
        obs_dim=v["obs_dim"],
        act_dim=v["act_dim"],
        hidden=meta.get("hidden", 128),
    )
    agent = Agent(spec, hyper or Hyperparams(), np.random.default_rng(0))
    named = dict(agent.actor.named_params())
    stored = dict(arrays)
    if set(named) != set(stored):
        raise ValueError(
            f"checkpoint parameter set does not match the variant: "
            f"missing {sorted(set(named) - set(stored))}, "
            f"unexpected {sorted(set(stored) - set(named))}"
        )
    for name, arr in named.items():
        if arr.shape != stored[name].shape:
            raise ValueError(f"shape mismatch for {name}")
        arr[...] = stored[name]
    from .nn import copy_params

    copy_params(agent.actor_targ.params, agent.actor.params)
    return agent, meta
