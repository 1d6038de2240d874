"""Seeded random streams for replicated runs.

Each replication owns a Philox stream keyed by ``(base_seed, rep)``.  All of
its uniforms are drawn as one ``(K, H, draws)`` block, so the value used at
episode ``k``, stage ``h`` is fixed by its position in the counter sequence
and never by the order in which replications execute.
"""

from __future__ import annotations

import numpy as np

from .envs import EnvSpec

_MASK64 = (1 << 64) - 1


def replication_seed(base_seed: int, rep: int) -> int:
    """64-bit seed for replication ``rep``, derived by hashing ``(base_seed, rep)``."""
    if rep < 0:
        raise ValueError(f"replication index must be >= 0, got {rep}")
    ss = np.random.SeedSequence([int(base_seed) & _MASK64, int(rep)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def episode_uniforms(seed: int, K: int, H: int, draws: int = 1) -> np.ndarray:
    """Uniforms on ``[0, 1)`` with shape ``(K, H, draws)``."""
    return stream(seed).random((K, H, draws))


def draw_randomness(spec: EnvSpec, seed: int, K: int) -> np.ndarray:
    """Realized randomness for ``K`` episodes, shape ``(K, H)`` or ``(K, H, bidders)``."""
    u = episode_uniforms(seed, K, spec.H, spec.draws_per_stage)
    out = np.empty_like(u)
    for h in range(1, spec.H + 1):
        out[:, h - 1] = spec.demand.value(h, u[:, h - 1])
    return out[:, :, 0] if spec.draws_per_stage == 1 else out
