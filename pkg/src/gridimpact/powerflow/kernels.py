"""Backward/forward sweep kernels: numba-compiled and pure-numpy backends.

The numba kernel solves one snapshot at a time with scalar loops; the numpy
backend solves a whole batch of snapshots with vectorized operations. Every
arithmetic step is elementwise per snapshot, so within a backend the result
of a snapshot never depends on which other snapshots share its batch.

Backend selection: the ``GRIDIMPACT_BACKEND`` environment variable, values
``numba`` or ``numpy``. Default is numba when importable, else numpy.

Array conventions (all BFS-ordered so a line's parent bus is updated before
its children): ``parent[k]``/``child[k]`` are bus indices of line k, ``z[k]``
its per-unit impedance, ``s`` the (batch, n_bus) per-unit complex bus loads.
"""

from __future__ import annotations

import os

import numpy as np

ENV_BACKEND = "GRIDIMPACT_BACKEND"
COLLAPSE_FLOOR_PU = 0.5

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False


def active_backend() -> str:
    """Resolve the kernel backend from the environment at call time."""
    choice = os.environ.get(ENV_BACKEND, "").strip().lower()
    if choice in ("numba", "numpy"):
        if choice == "numba" and not HAVE_NUMBA:
            raise RuntimeError("GRIDIMPACT_BACKEND=numba but numba is not importable")
        return choice
    if choice:
        raise RuntimeError(f"unknown {ENV_BACKEND} value: {choice!r} (use 'numba' or 'numpy')")
    return "numba" if HAVE_NUMBA else "numpy"


def _sweep_row_py(parent, child, z, s, v, i_line, tol, max_iter):
    """One snapshot: iterate backward current accumulation / forward voltage
    update until the largest voltage change drops below tol. Mutates v and
    i_line in place; returns (iterations, converged, collapse_bus_index)."""
    n = s.shape[0]
    m = parent.shape[0]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        i_acc = np.conj(s / v)
        for k in range(m - 1, -1, -1):
            i_line[k] = i_acc[child[k]]
            i_acc[parent[k]] += i_line[k]
        dv = 0.0
        for k in range(m):
            v_new = v[parent[k]] - z[k] * i_line[k]
            delta = abs(v_new - v[child[k]])
            if delta > dv:
                dv = delta
            v[child[k]] = v_new
        for i in range(n):
            if abs(v[i]) < COLLAPSE_FLOOR_PU:
                return iterations, False, i
        if dv < tol:
            return iterations, True, -1
    return iterations, False, -1


if HAVE_NUMBA:
    _sweep_row_jit = njit(cache=True, nogil=True)(_sweep_row_py)


def _solve_batch_numba(parent, child, z, s, v0, tol, max_iter):
    batch = s.shape[0]
    n = s.shape[1]
    m = parent.shape[0]
    v = np.full((batch, n), complex(v0), dtype=np.complex128)
    i_line = np.zeros((batch, m), dtype=np.complex128)
    iters = np.zeros(batch, dtype=np.int64)
    converged = np.zeros(batch, dtype=bool)
    collapse = np.full(batch, -1, dtype=np.int64)
    for t in range(batch):
        iters[t], converged[t], collapse[t] = _sweep_row_jit(
            parent, child, z, s[t], v[t], i_line[t], tol, max_iter)
    return v, i_line, iters, converged, collapse


def _solve_batch_numpy(parent, child, z, s, v0, tol, max_iter):
    batch, n = s.shape
    m = parent.shape[0]
    v = np.full((batch, n), complex(v0), dtype=np.complex128)
    i_line = np.zeros((batch, m), dtype=np.complex128)
    iters = np.zeros(batch, dtype=np.int64)
    converged = np.zeros(batch, dtype=bool)
    collapse = np.full(batch, -1, dtype=np.int64)
    if m == 0:
        iters[:] = 1
        converged[:] = True
        return v, i_line, iters, converged, collapse

    active = np.arange(batch)
    while active.size:
        va = v[active]
        ia = i_line[active]
        i_acc = np.conj(s[active] / va)
        for k in range(m - 1, -1, -1):
            ia[:, k] = i_acc[:, child[k]]
            i_acc[:, parent[k]] += ia[:, k]
        dv = np.zeros(active.size)
        for k in range(m):
            v_new = va[:, parent[k]] - z[k] * ia[:, k]
            np.maximum(dv, np.abs(v_new - va[:, child[k]]), out=dv)
            va[:, child[k]] = v_new
        v[active] = va
        i_line[active] = ia
        iters[active] += 1

        low = np.abs(va) < COLLAPSE_FLOOR_PU
        collapsed = low.any(axis=1)
        collapse[active[collapsed]] = np.argmax(low, axis=1)[collapsed]
        done_ok = ~collapsed & (dv < tol)
        converged[active[done_ok]] = True
        exhausted = iters[active] >= max_iter
        active = active[~(collapsed | done_ok | exhausted)]
    return v, i_line, iters, converged, collapse


def solve_batch(parent, child, z, s, v0, tol, max_iter):
    """Solve a batch of snapshots; dispatches on the active backend.

    Returns (v, i_line, iterations, converged, collapse_bus) where collapse
    is the first bus index whose voltage fell below 0.5 pu, or -1.
    """
    parent = np.ascontiguousarray(parent, dtype=np.int64)
    child = np.ascontiguousarray(child, dtype=np.int64)
    z = np.ascontiguousarray(z, dtype=np.complex128)
    s = np.ascontiguousarray(s, dtype=np.complex128)
    if active_backend() == "numba":
        return _solve_batch_numba(parent, child, z, s, v0, tol, max_iter)
    return _solve_batch_numpy(parent, child, z, s, v0, tol, max_iter)
