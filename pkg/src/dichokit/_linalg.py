"""Small dense linear-algebra helpers shared by the numerical modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value of a single matrix."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def spectral_norms(batch: np.ndarray) -> np.ndarray:
    """Largest singular values of a stack of matrices, shape (..., r, c).

    Uses the Gram matrix on the smaller side; rank-1 and 2x2 Gram cases are
    closed-form, everything else goes through batched ``eigvalsh``.
    """
    r, c = batch.shape[-2], batch.shape[-1]
    if r == 0 or c == 0:
        return np.zeros(batch.shape[:-2])
    if min(r, c) == 1:
        return np.sqrt(np.sum(batch * batch, axis=(-2, -1)))
    if r <= c:
        g = batch @ batch.swapaxes(-2, -1)
    else:
        g = batch.swapaxes(-2, -1) @ batch
    k = g.shape[-1]
    if k == 2:
        tr = g[..., 0, 0] + g[..., 1, 1]
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
        lam = 0.5 * (tr + disc)
    else:
        lam = np.linalg.eigvalsh(g)[..., -1]
    return np.sqrt(np.maximum(lam, 0.0))


def extreme_singular_values(batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(largest, smallest) singular values of a stack of square matrices.

    The smallest 2x2 value comes from det/lambda_max to dodge cancellation.
    """
    n = batch.shape[-1]
    if n == 1:
        s = np.abs(batch[..., 0, 0])
        return s, s
    g = batch @ batch.swapaxes(-2, -1)
    if n == 2:
        tr = g[..., 0, 0] + g[..., 1, 1]
        det = np.maximum(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0], 0.0)
        disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
        lam_max = 0.5 * (tr + disc)
        lam_min = np.where(lam_max > 0.0, det / np.where(lam_max > 0.0, lam_max, 1.0), 0.0)
    else:
        w = np.linalg.eigvalsh(g)
        lam_max = np.maximum(w[..., -1], 0.0)
        lam_min = np.maximum(w[..., 0], 0.0)
    return np.sqrt(lam_max), np.sqrt(lam_min)


def orthonormal_range(p: np.ndarray, tol: float = 0.5) -> np.ndarray:
    """Orthonormal basis of the range of an (approximate) projection matrix.

    Idempotent matrices have singular values clustered at >= 1 and at 0, so a
    fixed threshold between the clusters is reliable.
    """
    u, s, _ = np.linalg.svd(p)
    k = int(np.sum(s > tol))
    return u[:, :k]


def min_principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest principal angle between the column spans of a and b."""
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.pi / 2.0
    return float(np.min(scipy.linalg.subspace_angles(a, b)))


def oblique_projector(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Projection onto span(v1) along span(v2), via one linear solve."""
    n = v1.shape[0]
    basis = np.hstack([v1, v2])
    target = np.hstack([v1, np.zeros((n, v2.shape[1]))])
    return np.linalg.solve(basis.T, target.T).T


def envelope_rate(separations: np.ndarray, env_log: np.ndarray,
                  min_separation: float = 1.0) -> float:
    """Least-squares slope of a log-norm envelope over separations.

    Fits only separations >= ``min_separation`` to skip transients; falls back
    to all positive separations when the window is too short for that.
    """
    mask = separations >= min_separation
    if np.count_nonzero(mask) < 2:
        mask = separations > 0.0
    if np.count_nonzero(mask) < 2:
        return 0.0
    d = separations[mask]
    e = env_log[mask]
    d0 = d - d.mean()
    denom = float(d0 @ d0)
    if denom == 0.0:
        return 0.0
    return float(d0 @ (e - e.mean()) / denom)
