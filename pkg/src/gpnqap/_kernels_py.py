"""Pure-Python/numpy versions of the combinatorial kernels in ``_kernels.pyx``."""

import numpy as np


def qap_cost(d, f, perm):
    p = np.asarray(perm, dtype=np.intp)
    return float((np.asarray(d)[np.ix_(p, p)] * np.asarray(f)).sum())


def tour_length(d, tour):
    t = np.asarray(tour, dtype=np.intp)
    return float(np.asarray(d)[t, np.roll(t, -1)].sum())


def swap_delta(d, f, perm, r, s):
    d = np.asarray(d)
    f = np.asarray(f)
    p = np.asarray(perm, dtype=np.intp)
    pr, ps = p[r], p[s]
    delta = (f[r, r] - f[s, s]) * (d[ps, ps] - d[pr, pr]) + (f[r, s] - f[s, r]) * (d[ps, pr] - d[pr, ps])
    k = np.ones(len(p), dtype=bool)
    k[[r, s]] = False
    pk = p[k]
    delta += np.sum(
        (f[k, r] - f[k, s]) * (d[pk, ps] - d[pk, pr]) + (f[r, k] - f[s, k]) * (d[ps, pk] - d[pr, pk])
    )
    return float(delta)


def two_opt(d, f, perm, max_iters, tol=1e-9):
    p = np.array(perm, dtype=np.intp, copy=True)
    n = len(p)
    iters = 0
    while iters < max_iters:
        best, move = -tol, None
        for r in range(n - 1):
            for s in range(r + 1, n):
                delta = swap_delta(d, f, p, r, s)
                if delta < best:
                    best, move = delta, (r, s)
        if move is None:
            break
        r, s = move
        p[r], p[s] = p[s], p[r]
        iters += 1
    return p, qap_cost(d, f, p), iters


def _heap_orders(n):
    """All orderings of ``range(n)`` in iterative Heap's-algorithm order."""
    a = list(range(n))
    yield tuple(a)
    c = [0] * n
    i = 1
    while i < n:
        if c[i] < i:
            if i % 2 == 0:
                a[0], a[i] = a[i], a[0]
            else:
                a[c[i]], a[i] = a[i], a[c[i]]
            yield tuple(a)
            c[i] += 1
            i = 1
        else:
            c[i] = 0
            i += 1


def _best_of(orders, score, chunk=20000):
    best_perm, best_cost = None, np.inf
    buf = []

    def flush():
        nonlocal best_perm, best_cost
        arr = np.array(buf, dtype=np.intp)
        costs = score(arr)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_perm = float(costs[i]), arr[i].copy()
        buf.clear()

    for o in orders:
        buf.append(o)
        if len(buf) == chunk:
            flush()
    if buf:
        flush()
    return best_perm, best_cost


def brute_force_qap(d, f):
    d = np.asarray(d, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)

    def score(perms):
        return (d[perms[:, :, None], perms[:, None, :]] * f).sum(axis=(1, 2))

    return _best_of(_heap_orders(d.shape[0]), score)


def brute_force_tsp(d):
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if n <= 3:
        t = np.arange(n, dtype=np.intp)
        return t, tour_length(d, t)

    def orders():
        for o in _heap_orders(n - 1):
            yield (0,) + tuple(x + 1 for x in o)

    def score(tours):
        return d[tours, np.roll(tours, -1, axis=1)].sum(axis=1)

    return _best_of(orders(), score)
