"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Both paths compute the same quantity. Defaults follow the benchmark in
``benchmarks/bench_kernels.py``:

* ``dense_ordered`` runs on numba when numba imports and
  ``LRPRUNE_DISABLE_NUMBA`` is unset (or "0"). The numpy loop is 6-8x slower.
* ``lrp_dense`` runs on numpy. Its sign-split identity
  (a*w)^+ = a^+ w^+ + a^- w^- turns the rule into BLAS matmuls, which beat the
  elementwise numba loop by 5-16x. ``use_numba=True`` selects the loop, which
  serves as an independent cross-check.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _numba_requested():
    flag = os.environ.get("LRPRUNE_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and _numba_requested()


def lrp_dense_numpy(a, w, r, eps):
    """alpha1-beta0 redistribution through one dense layer (numpy route).

    a: (N, I) layer inputs, w: (I, J) weights, r: (N, J) upper relevance.
    Returns (r_in (N, I), absorbed (N,)).
    """
    a_pos = np.maximum(a, 0.0)
    a_neg = np.minimum(a, 0.0)
    w_pos = np.maximum(w, 0.0)
    w_neg = np.minimum(w, 0.0)
    z = a_pos @ w_pos + a_neg @ w_neg
    live = z > 0.0
    denom = np.where(live, z + eps, 1.0)
    s = np.where(live, r / denom, 0.0)
    r_in = a_pos * (s @ w_pos.T) + a_neg * (s @ w_neg.T)
    # dead columns lose all of R_j; live ones leak R_j * eps / (z_j + eps)
    lost = np.where(live, r * (eps / denom), r)
    return r_in, lost.sum(axis=1)


def _lrp_dense_loops(a, w, r, eps):
    n, ni = a.shape
    nj = w.shape[1]
    r_in = np.zeros((n, ni))
    absorbed = np.zeros(n)
    z = np.empty(nj)
    for s in range(n):
        for j in range(nj):
            z[j] = 0.0
        for i in range(ni):
            ai = a[s, i]
            if ai == 0.0:
                continue
            for j in range(nj):
                p = ai * w[i, j]
                if p > 0.0:
                    z[j] += p
        for j in range(nj):
            if z[j] > 0.0:
                q = r[s, j] / (z[j] + eps)
                absorbed[s] += r[s, j] - q * z[j]
                z[j] = q
            else:
                absorbed[s] += r[s, j]
                z[j] = 0.0
        for i in range(ni):
            ai = a[s, i]
            if ai == 0.0:
                continue
            acc = 0.0
            for j in range(nj):
                p = ai * w[i, j]
                if p > 0.0:
                    acc += p * z[j]
            r_in[s, i] = acc
    return r_in, absorbed


if HAVE_NUMBA:
    _lrp_dense_jit = numba.njit(cache=True, nogil=True)(_lrp_dense_loops)
else:  # pragma: no cover
    _lrp_dense_jit = _lrp_dense_loops


def lrp_dense_numba(a, w, r, eps):
    """alpha1-beta0 redistribution through one dense layer (numba route)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    return _lrp_dense_jit(a, w, r, float(eps))


def dense_ordered_numpy(a, w, b):
    """``a @ w + b`` summed strictly left to right over the inputs."""
    z = np.zeros((a.shape[0], w.shape[1]))
    for i in range(a.shape[1]):
        z += a[:, i, None] * w[i]
    return z + b


def _dense_ordered_loops(a, w, b):
    n, ni = a.shape
    nj = w.shape[1]
    z = np.zeros((n, nj))
    for s in range(n):
        for i in range(ni):
            ai = a[s, i]
            for j in range(nj):
                z[s, j] += ai * w[i, j]
        for j in range(nj):
            z[s, j] += b[j]
    return z


if HAVE_NUMBA:
    _dense_ordered_jit = numba.njit(cache=True, nogil=True)(_dense_ordered_loops)
else:  # pragma: no cover
    _dense_ordered_jit = _dense_ordered_loops


def dense_ordered_numba(a, w, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _dense_ordered_jit(a, w, b)


def dense_ordered(a, w, b, use_numba=None):
    """Dense layer with a fixed accumulation order.

    Inserting exact zeros (masked units) leaves every partial sum unchanged,
    so a masked layer and its structurally shrunk twin agree bit for bit.
    BLAS gives no such guarantee.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return dense_ordered_numba(a, w, b)
    return dense_ordered_numpy(a, w, b)


def lrp_dense(a, w, r, eps, use_numba=None):
    if use_numba and HAVE_NUMBA:
        return lrp_dense_numba(a, w, r, eps)
    return lrp_dense_numpy(a, w, r, eps)
