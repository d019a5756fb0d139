"""Vectorized boundary-offset computation (NumPy implementation).

This is the fallback for :mod:`midisync._offsets`; both implement the
same contract and must agree bit-for-bit with the step-wise state
machine in :mod:`midisync.scheduler`.

Model: a time cursor walks a token stream.  Every boundary starts
pending.  A chord token consumes all pending boundaries strictly within
``xi_ms`` of the cursor; a boundary left more than ``xi_ms`` behind the
cursor expires.  After each token the schedule records the distance to
the earliest still-pending boundary, clamped to ``[0, dmax_ms]`` (the
cap stands in for "no boundary nearby" when nothing is pending).

The vectorized form works by computing, per boundary, the token index
at which it stops being pending ("death"): the earliest of its
consumption index and its expiry index.  Because boundaries are sorted
and the pending set only ever loses its minimum element to consumption
or expiry from the front, the earliest pending boundary as a function
of token index is a step function whose segments can be painted with
``np.repeat``.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"
_FAR = np.int64(2**62)


def compute_offsets(
    cursor_ms: np.ndarray,
    is_chord: np.ndarray,
    bounds_ms: np.ndarray,
    xi_ms: int,
    dmax_ms: int,
) -> np.ndarray:
    """Offsets (seconds) after each token.

    ``cursor_ms``: int64, cursor value *after* each token (non-decreasing).
    ``is_chord``: uint8/bool flags marking chord tokens.
    ``bounds_ms``: int64 boundary times, strictly increasing.
    """
    cursor_ms = np.ascontiguousarray(cursor_ms, dtype=np.int64)
    bounds_ms = np.ascontiguousarray(bounds_ms, dtype=np.int64)
    n = cursor_ms.shape[0]
    m = bounds_ms.shape[0]
    if m == 0:
        return np.full(n, dmax_ms / 1000.0)
    if n == 0:
        return np.zeros(0)

    chord_idx = np.flatnonzero(np.asarray(is_chord, dtype=bool))
    # Consumption: earliest chord token whose cursor lies strictly inside
    # (b - xi, b + xi).  Cursor values are integers, so the open interval
    # is the closed interval [b - xi + 1, b + xi - 1].
    consume = np.full(m, n, dtype=np.int64)
    if chord_idx.size:
        chord_cursor = cursor_ms[chord_idx]
        k = np.searchsorted(chord_cursor, bounds_ms - xi_ms + 1, side="left")
        valid = k < chord_idx.size
        kv = k[valid]
        hit = chord_cursor[kv] <= bounds_ms[valid] + xi_ms - 1
        rows = np.flatnonzero(valid)[hit]
        consume[rows] = chord_idx[kv[hit]]

    # Expiry: earliest token whose cursor satisfies cursor - b > xi.
    expire = np.searchsorted(cursor_ms, bounds_ms + xi_ms + 1, side="left")
    death = np.minimum(consume, expire)

    # Boundary j is the earliest pending one from the moment every
    # earlier boundary has died until it dies itself.
    prefix = np.maximum.accumulate(death)
    start = np.empty(m, dtype=np.int64)
    start[0] = 0
    start[1:] = prefix[:-1]
    seg_start = np.minimum(start, n)
    seg_end = np.minimum(np.maximum(death, seg_start), n)
    lengths = seg_end - seg_start

    covered = int(lengths.sum())
    earliest = np.concatenate(
        [np.repeat(bounds_ms, lengths), np.full(n - covered, _FAR, dtype=np.int64)]
    )
    raw = earliest - cursor_ms
    np.clip(raw, 0, dmax_ms, out=raw)
    return raw / 1000.0
