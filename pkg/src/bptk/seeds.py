"""Deterministic RNG stream derivation.

All randomness in the toolkit flows from explicit integer seeds. A child
stream is derived from ``(seed, *tags)`` by hashing each tag (its ``repr``,
SHA-256) into a 64-bit word and feeding ``[seed, word0, word1, ...]`` as
entropy to a numpy SeedSequence. Streams for distinct purposes ("init",
"sampler", fold indices, patient indices) are therefore independent,
reproducible across processes and platforms, and safe to use from parallel
workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_word(tag: object) -> int:
    digest = hashlib.sha256(repr(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def spawn_rng(seed: int, *tags: object) -> np.random.Generator:
    """Return a Generator for the stream identified by (seed, *tags)."""
    entropy = [int(seed) & _MASK64] + [_tag_word(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(seed: int, *tags: object) -> int:
    """Derive a storable integer seed for the stream identified by (seed, *tags).

    ``spawn_rng(child_seed(s, *tags))`` is a different stream from
    ``spawn_rng(s, *tags)``; use one convention per call site. Child seeds
    exist so provenance records can carry a plain integer.
    """
    entropy = [int(seed) & _MASK64] + [_tag_word(t) for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
