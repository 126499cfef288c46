"""Normalizing constant of the store-forward stationary law.

For a queue vector Q the constant is

    Phi(Q) = sum over pool occupancies m with sum_l m_{lj} = Q_j of
             prod_l multinomial(m_l; m_{lj}) prod_j A_{lj}^{m_{lj}},

with Phi(0) = 1.  The main evaluator convolves pools sequentially, keeping
only the 'frontier' queues that still appear in a later pool, and works on a
max-scaled linear table so that queue vectors in the hundreds stay well
conditioned.  ``norm_const_bruteforce`` enumerates the defining sum directly
and is kept deliberately independent of the convolution code path.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import gammaln

from .model import CapacityPolytope, CapExceededError

_NEG_INF = float("-inf")

# caps guarding pathological inputs; generous for every shipped example
_MAX_TABLE_CELLS = 50_000_000

# above this total occupancy the convolution is tilted (see _interior_log_tilt)
_TILT_THRESHOLD = 120


class NormConstCache:
    """Memo from queue-vector tuples to log Phi, bound to one polytope."""

    def __init__(self, polytope: CapacityPolytope):
        self.polytope = polytope
        self._log: dict[tuple, float] = {}
        self.kernels: dict[tuple, tuple] = {}

    def lookup(self, key: tuple):
        return self._log.get(key)

    def store(self, key: tuple, value: float):
        self._log[key] = value

    def clear(self):
        self._log.clear()
        self.kernels.clear()

    def __len__(self) -> int:
        return len(self._log)


def _check_queue_vector(Q, n_queues: int) -> np.ndarray:
    # negative entries are allowed here: Phi of such a vector is 0 by
    # convention, which callers read off the returned vector
    q = np.asarray(Q)
    if q.shape != (n_queues,):
        raise ValueError(f"queue vector has shape {q.shape}, expected ({n_queues},)")
    qi = q.astype(np.int64)
    if np.any(qi != q):
        raise ValueError("queue vector entries must be integers")
    return qi


def _pool_kernel_log(sizes, log_a, base_count, base_log):
    """Log multinomial kernel over the variable member axes of one pool.

    ``sizes[t]`` is Q_j+1 for variable member t, ``log_a[t]`` its log pool
    coefficient; members whose allocation is forced contribute ``base_count``
    and ``base_log`` as constants.
    """
    if not sizes:
        total = float(base_count)
        return np.asarray(float(gammaln(total + 1.0)) + base_log)
    shape = tuple(sizes)
    total = np.full(shape, float(base_count))
    k = np.zeros(shape)
    for t, (sz, la) in enumerate(zip(sizes, log_a)):
        u = np.arange(sz, dtype=float)
        bshape = [1] * len(sizes)
        bshape[t] = sz
        u = u.reshape(bshape)
        total = total + u
        k = k + u * la - gammaln(u + 1.0)
    k = k + gammaln(total + 1.0) + base_log
    return k


def _interior_log_tilt(Q: np.ndarray, A: np.ndarray) -> np.ndarray:
    """A rate point z in {A z <= 1, z > 0} roughly maximizing sum Q_j log z_j.

    Used purely as a preconditioner: evaluating the convolution with
    A_lj -> A_lj z_j multiplies every term of Phi by prod_j z_j^{Q_j}, which
    keeps all table entries <= 1 for large scaled queue vectors.  A loose
    dual ascent is plenty; tilt quality only affects conditioning.
    """
    active = np.flatnonzero(Q > 0)
    q = Q[active].astype(float)
    q = q / q.sum()
    Aa = A[:, active]
    rows = np.flatnonzero(Aa.sum(axis=1) > 0)
    Aa = Aa[rows]
    p = np.ones(len(rows))
    step = 1.0
    s = None
    for _ in range(2000):
        c = Aa.T @ p
        s = q / c
        grad = 1.0 - Aa @ s
        if np.max(p * np.abs(grad)) < 1e-9 and np.max(-grad, initial=0.0) < 1e-9:
            break
        g0 = float(np.sum(q * (np.log(q) - np.log(c) - 1.0)) + p.sum())
        while step > 1e-12:
            p_new = np.maximum(p - step * grad, 0.0)
            c_new = Aa.T @ p_new
            if np.all(c_new > 0):
                g1 = float(np.sum(q * (np.log(q) - np.log(c_new) - 1.0)) + p_new.sum())
                if g1 <= g0:
                    break
            step *= 0.5
        p = np.maximum(p - step * grad, 0.0)
        step = min(step * 1.5, 1e6)
    c = Aa.T @ p
    s = q / c
    scale = float(np.max(A[:, active] @ s))
    s = s / max(scale, 1.0) * (1.0 - 1e-12)
    z = np.ones(len(Q))
    z[active] = s
    return z


_band_mats: dict[int, np.ndarray] = {}


def _band_matrix(S: int) -> np.ndarray:
    """0/1 matrix W with W[v, u*S + r] = 1 iff u + r = v (all in 0..S-1)."""
    W = _band_mats.get(S)
    if W is None:
        u = np.arange(S)
        W = (u[:, None, None] == u[None, :, None] + u[None, None, :]).astype(float)
        W = W.reshape(S, S * S)
        _band_mats[S] = W
    return W


def _pool_plan(active: tuple, A: np.ndarray):
    """Static contraction schedule for one active set: per pool, the split
    of its members by frontier role, the table permutation, and a kernel
    memo.  Depends only on the zero pattern of the pool matrix, so one plan
    serves every queue vector with the same support.  None means some
    active queue has no pool at all (Phi = 0)."""
    last_pool = {}
    for j in active:
        pools = np.flatnonzero(A[:, j] > 0)
        if len(pools) == 0:
            return None
        last_pool[j] = int(pools[-1])
    steps = []
    axes: list[int] = []
    for l in range(A.shape[0]):
        members = [j for j in active if A[l, j] > 0]
        if not members:
            continue
        banded = [j for j in members if j in axes and last_pool[j] != l]
        contract = [j for j in members if j in axes and last_pool[j] == l]
        fresh = [j for j in members if j not in axes and last_pool[j] != l]
        fixed = [j for j in members if j not in axes and last_pool[j] == l]
        pass_axes = [a for a in axes if a not in members]
        perm = tuple(axes.index(a) for a in pass_axes + banded + contract)
        if perm == tuple(range(len(perm))):
            perm = None
        npass, nb, nf = len(pass_axes), len(banded), len(fresh)
        # permutation interleaving each running-total axis with its
        # newly-served axis: (pass, r0,u0, r1,u1, ..., fresh)
        inter = None
        if nb > 1:
            inter = tuple(
                list(range(npass))
                + [x for t in range(nb) for x in (npass + t, npass + nb + t)]
                + list(range(npass + 2 * nb, npass + 2 * nb + nf))
            )
        steps.append(
            (l, tuple(banded), tuple(contract), tuple(fresh), tuple(fixed),
             perm, npass, tuple(pass_axes), inter, {})
        )
        axes = pass_axes + banded + fresh
    assert axes == [], "internal error: unconsumed frontier axes"
    return steps


def _pool_kernel(l, contract, banded, fresh, fixed, sizes, fixedq, A, memo):
    """Normalized pool kernel as a 2-d matrix (contract cells x rest).

    Axis order (contract..., banded..., fresh...), contract axes flipped so
    index r pairs with serving Q_j - r packets; peak log value returned
    separately.  Memoized when ``memo`` is given (exact coefficients only)."""
    log_a = [math.log(A[l, j]) for j in contract + banded + fresh]
    base_count = sum(fixedq)
    base_log = sum(
        q * math.log(A[l, j]) - float(gammaln(q + 1.0))
        for j, q in zip(fixed, fixedq)
    )
    klog = _pool_kernel_log(list(sizes), log_a, base_count, base_log)
    mk = float(np.max(klog))
    klin = np.exp(klog - mk)
    if contract:
        klin = np.flip(klin, axis=tuple(range(len(contract))))
    c_cells = math.prod(sizes[: len(contract)])
    klin2 = np.ascontiguousarray(klin).reshape(c_cells, -1)
    entry = (klin2, mk)
    if memo is not None and len(memo) < 20_000:
        memo[(sizes, fixedq)] = entry
    return entry


def _convolve_log(Q: np.ndarray, A: np.ndarray, memo: dict | None = None) -> float:
    active = tuple(j for j in range(len(Q)) if Q[j] > 0)
    if not active:
        return 0.0
    plan = memo.get(("plan", active)) if memo is not None else None
    if plan is None:
        plan = _pool_plan(active, A)
        if memo is not None:
            memo[("plan", active)] = plan
    if plan is None:
        return _NEG_INF  # some queue has no pool to hold its packets

    tilt_correction = 0.0
    tilted = False
    if int(Q.sum()) > _TILT_THRESHOLD:
        z = _interior_log_tilt(Q, A)
        A = A * z[None, :]
        tilt_correction = float(np.sum(Q * np.log(z)))
        tilted = True  # coefficients are state dependent: skip kernel memos

    sz = [int(v) + 1 for v in Q]
    table = np.ones((1, 1))
    offset = 0.0

    for l, banded, contract, fresh, fixed, perm, npass, pass_axes, inter, kmemo in plan:
        sizes = tuple(sz[j] for j in contract + banded + fresh)
        fixedq = tuple(sz[j] - 1 for j in fixed)
        entry = None if tilted else kmemo.get((sizes, fixedq))
        if entry is None:
            entry = _pool_kernel(
                l, contract, banded, fresh, fixed, sizes, fixedq, A,
                None if tilted else kmemo,
            )
        klin2, mk = entry
        nb = len(banded)

        p_cells = math.prod(sz[a] for a in pass_axes)
        b_cells = math.prod(sz[j] for j in banded)
        f_cells = math.prod(sz[j] for j in fresh)
        if p_cells * b_cells * b_cells * f_cells > _MAX_TABLE_CELLS:
            raise CapExceededError(
                "normalizing-constant table too large for this queue vector; "
                "reduce the vector or reorder pools"
            )

        if perm is not None:
            table = np.transpose(table, perm)
        # rows run over (pass, banded so far), columns over finishing axes
        part = table.reshape(p_cells * b_cells, -1) @ klin2
        # fold each newly served count into its running-total axis; with the
        # (r_t, u_t) pairs adjacent this is one small matmul per banded axis
        if nb:
            if inter is not None:
                part = part.reshape(
                    tuple(sz[a] for a in pass_axes)
                    + tuple(sz[j] for j in banded) * 2
                    + tuple(sz[j] for j in fresh)
                )
                part = np.transpose(part, inter)
            trail = f_cells
            for t in range(nb - 1, -1, -1):
                S = sz[banded[t]]
                lead = p_cells * math.prod(sz[banded[i]] ** 2 for i in range(t))
                part = _band_matrix(S) @ part.reshape(lead, S * S, trail)
                trail *= S
        out = part

        offset += mk
        m = float(out.max())
        if m <= 0.0:
            return _NEG_INF
        if m > 1e100 or m < 1e-100:
            out = out / m
            offset += math.log(m)
        table = out.reshape(
            tuple(sz[a] for a in pass_axes)
            + tuple(sz[j] for j in banded)
            + tuple(sz[j] for j in fresh)
        )

    val = float(table.reshape(()))
    if val <= 0.0:
        return _NEG_INF
    return offset + math.log(val) - tilt_correction


def log_norm_const(Q, polytope: CapacityPolytope, cache: NormConstCache | None = None) -> float:
    """log Phi(Q) via sequential pool convolution; -inf if any entry is
    negative (the Phi = 0 convention)."""
    q = _check_queue_vector(Q, polytope.n_queues)
    if np.any(q < 0):
        return -math.inf
    key = tuple(int(v) for v in q)
    if cache is not None:
        hit = cache.lookup(key)
        if hit is not None:
            return hit
    val = _convolve_log(q, polytope.matrix, cache.kernels if cache is not None else None)
    if cache is not None:
        cache.store(key, val)
    return val


def norm_const(Q, polytope: CapacityPolytope, cache: NormConstCache | None = None) -> float:
    """Phi(Q) in linear scale (may overflow for very large vectors)."""
    return float(np.exp(log_norm_const(Q, polytope, cache)))


def norm_const_table(polytope: CapacityPolytope, shape) -> np.ndarray:
    """Phi over an entire box of queue vectors in one convolution sweep.

    ``shape[j]`` is the number of values (Q_j from 0 to shape[j]-1).  Linear
    scale, intended for small verification boxes.
    """
    A = polytope.matrix
    J = A.shape[1]
    shape = tuple(int(s) for s in shape)
    if len(shape) != J:
        raise ValueError("shape must give one extent per queue")
    if int(np.prod(shape, dtype=np.int64)) > _MAX_TABLE_CELLS:
        raise CapExceededError("verification box too large")
    table = np.zeros(shape)
    table[(0,) * J] = 1.0
    for l in range(A.shape[0]):
        members = [j for j in range(J) if A[l, j] > 0 and shape[j] > 1]
        if not members:
            continue
        sizes = [shape[j] for j in members]
        klog = _pool_kernel_log(sizes, [math.log(A[l, j]) for j in members], 0, 0.0)
        klin = np.exp(klog)
        out = np.zeros(shape)
        for u in itertools.product(*[range(s) for s in sizes]):
            dst = [slice(None)] * J
            src = [slice(None)] * J
            for t, j in enumerate(members):
                dst[j] = slice(u[t], shape[j])
                src[j] = slice(0, shape[j] - u[t])
            out[tuple(dst)] += klin[u] * table[tuple(src)]
        table = out
    return table


# -------------------- independent brute force --------------------


def _compositions(total: int, parts: int):
    # all nonnegative integer vectors of given length summing to total
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def norm_const_bruteforce(Q, polytope: CapacityPolytope, total_cap: int = 24) -> float:
    """Direct enumeration of the defining sum.  Exact integer multinomials,
    no convolution, no memoization.  Capped at sum(Q) <= total_cap."""
    q = _check_queue_vector(Q, polytope.n_queues)
    if np.any(q < 0):
        return 0.0
    if int(q.sum()) > total_cap:
        raise CapExceededError(
            f"brute force capped at total occupancy {total_cap}, got {int(q.sum())}"
        )
    A = polytope.matrix
    L = A.shape[0]
    pools_of = [np.flatnonzero(A[:, j] > 0).tolist() for j in range(len(q))]
    queues = [j for j in range(len(q)) if q[j] > 0]
    for j in queues:
        if not pools_of[j]:
            return 0.0
    split_choices = [list(_compositions(int(q[j]), len(pools_of[j]))) for j in queues]
    total = 0.0
    for combo in itertools.product(*split_choices):
        m = [dict() for _ in range(L)]
        for j, split in zip(queues, combo):
            for l, cnt in zip(pools_of[j], split):
                if cnt:
                    m[l][j] = cnt
        term = 1.0
        for l in range(L):
            if not m[l]:
                continue
            mult = 1
            running = 0
            for j, cnt in m[l].items():
                running += cnt
                mult *= math.comb(running, cnt)
            term *= float(mult)
            for j, cnt in m[l].items():
                term *= A[l, j] ** cnt
        total += term
    return total


def norm_const_bruteforce_table(polytope: CapacityPolytope, total_cap: int) -> np.ndarray:
    """Brute-force Phi for every Q with sum(Q) <= total_cap, vectorized.

    Same direct enumeration of pool occupancies as ``norm_const_bruteforce``
    (every admissible m is generated and its weight accumulated at its
    aggregate Q); batching over all Q at once just avoids Python loops.
    Entries with sum(Q) > total_cap are not populated.
    """
    A = polytope.matrix
    L, J = A.shape
    slots = [(l, j) for l in range(L) for j in range(J) if A[l, j] > 0]
    if (total_cap + 1) ** J > _MAX_TABLE_CELLS:
        raise CapExceededError("brute-force table too large")
    # enumerate all occupancy vectors over the slots with total <= cap
    rows = np.zeros((1, 0), dtype=np.int64)
    sums = np.zeros(1, dtype=np.int64)
    for _ in slots:
        counts = total_cap - sums + 1
        offsets = np.repeat(np.cumsum(counts) - counts, counts)
        col = np.arange(counts.sum(), dtype=np.int64) - offsets
        rows = np.repeat(rows, counts, axis=0)
        rows = np.concatenate([rows, col[:, None]], axis=1)
        sums = np.repeat(sums, counts) + col
    logw = np.zeros(len(rows))
    for t, (l, j) in enumerate(slots):
        c = rows[:, t].astype(float)
        logw += c * math.log(A[l, j]) - gammaln(c + 1.0)
    for l in range(L):
        cols = [t for t, (pl, _) in enumerate(slots) if pl == l]
        if cols:
            m_l = rows[:, cols].sum(axis=1).astype(float)
            logw += gammaln(m_l + 1.0)
    w = np.exp(logw)
    qmat = np.zeros((len(rows), J), dtype=np.int64)
    for t, (_, j) in enumerate(slots):
        qmat[:, j] += rows[:, t]
    shape = (total_cap + 1,) * J
    flat = np.ravel_multi_index([qmat[:, j] for j in range(J)], shape)
    table = np.bincount(flat, weights=w, minlength=int(np.prod(shape))).reshape(shape)
    return table
