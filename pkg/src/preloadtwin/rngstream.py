"""Deterministic random-stream management.

One master seed governs a run. Every consumer derives its own child stream
from (master_seed, purpose tag, *indices) through a counter-based
SeedSequence split, so adding or reordering parallel work never changes the
draws any single consumer sees.

Purpose tags are a fixed registry (not hashes of strings) so stream
identities are stable across releases.
"""

from __future__ import annotations

import numpy as np

# Registry of purpose tags. Append only; never renumber.
TAGS = {
    "prior-sample": 0,   # drawing soil realizations from the priors
    "belief": 1,         # particle init + resampling inside one belief history
    "truth": 2,          # ground-truth soil draw of one MC rollout
    "noise": 3,          # measurement-noise draws of one MC rollout
    "ce": 4,             # cross-entropy candidate sampling
    "eval": 5,           # per-evaluation seed derivation
    "fixture": 6,        # test fixtures
}


def stream(master_seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Return the child generator for (master_seed, tag, *indices).

    The same arguments always produce a generator in the same state.
    """
    if tag not in TAGS:
        raise KeyError(f"unknown stream tag {tag!r}; known: {sorted(TAGS)}")
    key = (TAGS[tag],) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=key))


def generator_state(rng: np.random.Generator) -> dict:
    """Serializable snapshot of a generator (used for belief rng_state)."""
    return rng.bit_generator.state


def generator_from_state(state: dict) -> np.random.Generator:
    """Rebuild a generator from a snapshot without touching the original."""
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng
