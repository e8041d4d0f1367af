"""Counter-addressed Wiener increments.

Every (seed, stream, chunk) triple keys its own Philox generator, so the
increment for trajectory k at step j can be regenerated without touching any
other trajectory or any earlier chunk.  Streams are 64-bit integers built by
:func:`stream_id` from a channel number and a trajectory index.
"""
from __future__ import annotations

import numpy as np

CHUNK = 2048
_MASK64 = (1 << 64) - 1

# channel numbers
SPIN_A = 0
SPIN_B = 1
INITIAL = 2


def stream_id(traj: int, channel: int = SPIN_A) -> int:
    if traj < 0 or traj >= 1 << 48:
        raise ValueError(f"trajectory index {traj} out of range")
    return (channel << 48) | traj


def _generator(seed: int, stream: int, chunk: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=[seed & _MASK64, stream], counter=[0, chunk, 0, 0])
    return np.random.Generator(bitgen)


def standard_normals(seed: int, stream: int, start: int, n_steps: int) -> np.ndarray:
    """Unit normals of shape (n_steps, 2) for steps start .. start+n_steps-1."""
    out = np.empty((n_steps, 2))
    step = start
    pos = 0
    while pos < n_steps:
        chunk, offset = divmod(step, CHUNK)
        take = min(CHUNK - offset, n_steps - pos)
        block = _generator(seed, stream, chunk).standard_normal((offset + take, 2))
        out[pos:pos + take] = block[offset:]
        pos += take
        step += take
    return out


def wiener_increments(seed: int, stream: int, start: int, n_steps: int, dt: float) -> np.ndarray:
    """(dw1, dw2) pairs with mean 0 and variance dt, shape (n_steps, 2)."""
    return np.sqrt(dt) * standard_normals(seed, stream, start, n_steps)


def block_normals(seed: int, streams, n_steps: int, batch: int = 256):
    """Yield unit normals for many streams from step 0, as (m, 2, n_streams) arrays.

    Batches never straddle a chunk boundary.  Draws within a chunk are
    sequential, so the values agree with :func:`standard_normals`.
    """
    n = len(streams)
    step = 0
    gens = None
    while step < n_steps:
        chunk, offset = divmod(step, CHUNK)
        if offset == 0:
            gens = [_generator(seed, s, chunk) for s in streams]
        m = min(batch, CHUNK - offset, n_steps - step)
        buf = np.empty((n, 2 * m))
        for i, g in enumerate(gens):
            g.standard_normal(out=buf[i])
        yield np.ascontiguousarray(buf.T).reshape(m, 2, n)
        step += m


def uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    """n uniforms on [0, 1) from a dedicated stream (initial-state sampling)."""
    return _generator(seed, stream, 0).random(n)
