"""Rank-factored evaluation of the two-parameter solution kernels.

Everything downstream of a dichotomy projection P needs values of the
kernels U(t) P U(s)^-1 and U(t) Q U(s)^-1 across grid pairs: the projector
family, the decay-constant fits, and the Green-kernel solver.  Forming them
as quotients of anchored fundamental matrices destroys all accuracy once the
window is long, because the fundamental matrix is exponentially conditioned.

Instead each kernel is kept in factored form

    U(t_i) P U(t_j)^-1 = exp(a_i + b_j) * L_i @ R_j,

where the column block L (a basis of the propagated range of P) and the row
block R (the propagated dual functionals) are advanced one grid step at a
time from the anchor index, renormalized at every step with the log of the
scale factor kept separately.  Each factor is only ever propagated in
directions where its own subspace dominates, so the contamination by the
complementary modes stays at roundoff level relative to the factor itself,
and any kernel entry at any pair of grid points is available in O(1) at full
relative accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .errors import InvalidProjection, NumericalOverflow
from .propagator import (
    ALL_PAIRS_LIMIT,
    DEFAULT_SEED,
    RANDOM_PAIR_COUNT,
    TransitionCache,
)

_EXP_CAP = 700.0


@dataclass(frozen=True)
class KernelFactors:
    """Factored kernels of one projection on one transition cache."""

    cache: TransitionCache = field(repr=False)
    t_ref: float
    i_ref: int
    rank: int
    # P-side factors: kernel(i, j) = exp(a_p[i] + b_p[j]) * lp[i] @ rp[j]
    lp: np.ndarray = field(repr=False)
    a_p: np.ndarray = field(repr=False)
    rp: np.ndarray = field(repr=False)
    b_p: np.ndarray = field(repr=False)
    lp_tri: np.ndarray = field(repr=False)
    # Q-side factors, same layout with rank n - rank
    lq: np.ndarray = field(repr=False)
    a_q: np.ndarray = field(repr=False)
    rq: np.ndarray = field(repr=False)
    b_q: np.ndarray = field(repr=False)
    lq_tri: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.cache.dim

    @property
    def n_points(self) -> int:
        return self.cache.grid.n_points


def _propagate_columns(steps: np.ndarray, i_ref: int, v: np.ndarray):
    """Column block T(t_i, t_ref) @ v for all i, unit-normalized per point."""
    n_pts = steps.shape[0] + 1
    k = v.shape[1]
    out = np.empty((n_pts, v.shape[0], k))
    logs = np.zeros(n_pts)
    out[i_ref] = v
    if k == 0:
        return out, logs

    def renorm(m, base):
        s = float(np.linalg.norm(m))
        if s == 0.0 or not np.isfinite(s):
            raise NumericalOverflow("degenerate kernel factor during propagation")
        return m / s, base + np.log(s)

    for i in range(i_ref, n_pts - 1):
        out[i + 1], logs[i + 1] = renorm(steps[i] @ out[i], logs[i])
    for i in range(i_ref, 0, -1):
        out[i - 1], logs[i - 1] = renorm(np.linalg.solve(steps[i - 1], out[i]), logs[i])
    return out, logs


def _propagate_rows(steps: np.ndarray, i_ref: int, r: np.ndarray):
    """Row block r @ T(t_ref, t_j) for all j, unit-normalized per point."""
    n_pts = steps.shape[0] + 1
    k = r.shape[0]
    out = np.empty((n_pts, k, r.shape[1]))
    logs = np.zeros(n_pts)
    out[i_ref] = r
    if k == 0:
        return out, logs

    def renorm(m, base):
        s = float(np.linalg.norm(m))
        if s == 0.0 or not np.isfinite(s):
            raise NumericalOverflow("degenerate kernel factor during propagation")
        return m / s, base + np.log(s)

    for j in range(i_ref, n_pts - 1):
        out[j + 1], logs[j + 1] = renorm(
            np.linalg.solve(steps[j].T, out[j].T).T, logs[j]
        )
    for j in range(i_ref, 0, -1):
        out[j - 1], logs[j - 1] = renorm(out[j] @ steps[j - 1], logs[j])
    return out, logs


def _triangular_factors(l: np.ndarray) -> np.ndarray:
    """R factors of the reduced QR of each column block.

    With L = Q R and Q orthonormal, the spectral norm of L @ X equals the
    spectral norm of R @ X; the sweeps below only ever need R.
    """
    if l.shape[-1] == 0:
        return np.zeros((l.shape[0], 0, 0))
    _, r = np.linalg.qr(l)
    return r


def factorize(cache: TransitionCache, p: np.ndarray, t_ref: float) -> KernelFactors:
    """Build the factored kernels of projection p anchored at grid time t_ref."""
    i_ref = cache.grid.index_of(t_ref)
    n = cache.dim
    v1 = _linalg.orthonormal_range(p)
    r1 = v1.T @ p
    q = np.eye(n) - p
    v2 = _linalg.orthonormal_range(q)
    r2 = v2.T @ q
    if v1.shape[1] + v2.shape[1] != n:
        # Ranges of an idempotent pair must be complementary; a mismatch means
        # the input was too far from a projection.
        raise InvalidProjection("projection ranks are inconsistent")
    lp, a_p = _propagate_columns(cache.steps, i_ref, v1)
    rp, b_p = _propagate_rows(cache.steps, i_ref, r1)
    lq, a_q = _propagate_columns(cache.steps, i_ref, v2)
    rq, b_q = _propagate_rows(cache.steps, i_ref, r2)
    return KernelFactors(
        cache=cache, t_ref=float(t_ref), i_ref=i_ref, rank=v1.shape[1],
        lp=lp, a_p=a_p, rp=rp, b_p=b_p, lp_tri=_triangular_factors(lp),
        lq=lq, a_q=a_q, rq=rq, b_q=b_q, lq_tri=_triangular_factors(lq),
    )


def _materialize(l, r, log_scale, shape):
    if l.shape[-1] == 0:
        return np.zeros(shape)
    if log_scale > _EXP_CAP:
        raise NumericalOverflow(
            f"kernel magnitude exp({log_scale:.1f}) exceeds double precision; "
            "shorten the window or rescale the problem"
        )
    return np.exp(log_scale) * (l @ r)


def kernel_matrix(fac: KernelFactors, i: int, j: int, side: str) -> np.ndarray:
    """Materialize U(t_i) P U(t_j)^-1 (side 'p') or the Q-side analogue."""
    n = fac.n
    if side == "p":
        return _materialize(fac.lp[i], fac.rp[j], fac.a_p[i] + fac.b_p[j], (n, n))
    return _materialize(fac.lq[i], fac.rq[j], fac.a_q[i] + fac.b_q[j], (n, n))


def projector_at(fac: KernelFactors, i: int) -> np.ndarray:
    """The time-sliced projection P(t_i)."""
    return kernel_matrix(fac, i, i, "p")


def projector_stack(fac: KernelFactors) -> np.ndarray:
    """All P(t_i) as one (n_points, n, n) array."""
    n_pts, n = fac.n_points, fac.n
    if fac.rank == 0:
        return np.zeros((n_pts, n, n))
    scale = fac.a_p + fac.b_p
    if np.max(scale) > _EXP_CAP:
        raise NumericalOverflow("projector family overflows double precision")
    return np.exp(scale)[:, None, None] * (fac.lp @ fac.rp)


def side_envelope(
    fac: KernelFactors, side: str, *, seed: int = DEFAULT_SEED
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-separation maxima of the log kernel norms on one side.

    P side sweeps pairs t >= s, Q side pairs s >= t; in both cases the
    separation axis is nonnegative.  Returns (separations, envelope_log,
    argmax_anchor_index); all pairs up to ``ALL_PAIRS_LIMIT`` grid points,
    seeded random pairs beyond that.
    """
    n_pts = fac.n_points
    h = fac.cache.grid.h
    if side == "p":
        tri, rows, la, lb = fac.lp_tri, fac.rp, fac.a_p, fac.b_p
    else:
        tri, rows, la, lb = fac.lq_tri, fac.rq, fac.a_q, fac.b_q
    if tri.shape[-1] == 0:
        raise ValueError("envelope of a vacuous side")

    if n_pts <= ALL_PAIRS_LIMIT:
        env = np.empty(n_pts)
        arg = np.zeros(n_pts, dtype=int)
        for k in range(n_pts):
            if side == "p":
                m = tri[k:] @ rows[: n_pts - k]
                logs = np.log(np.maximum(_linalg.spectral_norms(m), 1e-300))
                logs += la[k:] + lb[: n_pts - k]
            else:
                m = tri[: n_pts - k] @ rows[k:]
                logs = np.log(np.maximum(_linalg.spectral_norms(m), 1e-300))
                logs += la[: n_pts - k] + lb[k:]
            j = int(np.argmax(logs))
            env[k] = logs[j]
            arg[k] = j
        return h * np.arange(n_pts), env, arg

    rng = np.random.default_rng(seed)
    a = rng.integers(0, n_pts, RANDOM_PAIR_COUNT)
    b = rng.integers(0, n_pts, RANDOM_PAIR_COUNT)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    if side == "p":
        i_idx, j_idx = hi, lo
    else:
        i_idx, j_idx = lo, hi
    logs = np.empty(RANDOM_PAIR_COUNT)
    chunk = 1 << 18
    for s0 in range(0, RANDOM_PAIR_COUNT, chunk):
        s1 = min(s0 + chunk, RANDOM_PAIR_COUNT)
        m = tri[i_idx[s0:s1]] @ rows[j_idx[s0:s1]]
        logs[s0:s1] = np.log(np.maximum(_linalg.spectral_norms(m), 1e-300))
        logs[s0:s1] += la[i_idx[s0:s1]] + lb[j_idx[s0:s1]]
    from .propagator import _bucket_envelope

    seps, env, arg = _bucket_envelope(hi - lo, logs, lo, n_pts)
    return h * seps, env, arg


def apply_green(fac: KernelFactors, f_samples: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid quadrature of the Green kernel against sampled forcing.

    u(t_i) integrates the P-side kernel over s <= t_i and subtracts the
    Q-side integral over s >= t_i; both are O(n_points) via prefix sums of
    the factored kernels.  The split at s = t_i keeps the quadrature on each
    smooth branch of the kernel.
    """
    n_pts, n = fac.n_points, fac.n
    f_sup = float(np.max(np.abs(f_samples))) if f_samples.size else 0.0
    log_f = np.log(f_sup) if f_sup > 0.0 else 0.0
    u = np.zeros((n_pts, n))

    if fac.rank > 0:
        if np.max(fac.b_p) + log_f > _EXP_CAP:
            raise NumericalOverflow("forward kernel weights overflow; shorten the window")
        c = np.exp(fac.b_p)[:, None] * np.einsum("jkn,jn->jk", fac.rp, f_samples)
        cum = np.cumsum(c, axis=0)
        prefix = h * (cum - 0.5 * c[0] - 0.5 * c)
        u += np.exp(fac.a_p)[:, None] * np.einsum("ink,ik->in", fac.lp, prefix)

    if fac.rank < n:
        if np.max(fac.b_q) + log_f > _EXP_CAP:
            raise NumericalOverflow("backward kernel weights overflow; shorten the window")
        c = np.exp(fac.b_q)[:, None] * np.einsum("jkn,jn->jk", fac.rq, f_samples)
        cum = np.cumsum(c[::-1], axis=0)[::-1]
        suffix = h * (cum - 0.5 * c - 0.5 * c[-1])
        u -= np.exp(fac.a_q)[:, None] * np.einsum("ink,ik->in", fac.lq, suffix)

    return u
