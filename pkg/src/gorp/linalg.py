"""Dense linear algebra kernels on 2-D float64 numpy arrays.

The SVD is a one-sided (Hestenes) Jacobi iteration. Column pairs are
visited in round-robin tournament order so that every round rotates a set
of disjoint pairs at once with vectorized numpy operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from gorp.errors import NumericInputError, ShapeError

JACOBI_TOL = 1e-12
MAX_SWEEPS = 80


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def frobenius_norm_sq(m) -> float:
    m = np.asarray(m, dtype=np.float64)
    return float(np.sum(m * m))


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray  # m x p, orthonormal columns
    singular_values: np.ndarray  # length p, nonincreasing
    Vt: np.ndarray  # p x n, orthonormal rows

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.Vt


@lru_cache(maxsize=None)
def _round_robin_shift(size: int) -> np.ndarray:
    """Row permutation taking one round-robin round to the next.

    Rows are paired as (i, size - 1 - i). Row 0 stays put and the others
    rotate by one, so every pair meets exactly once in size - 1 rounds and
    the original order returns after a full sweep.
    """
    return np.array([0, size - 1] + list(range(1, size - 1)), dtype=np.intp)


def _jacobi_columns(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalize the columns of a (m >= n) by plane rotations.

    Returns the rotated columns and the accumulated orthogonal matrix V with
    a_in @ V == a_out.
    """
    m, n = a.shape
    size = n + (n % 2)
    # columns are stored as rows; an odd count gets a zero row that never rotates
    at = np.zeros((size, m))
    at[:n] = a.T
    vt = np.eye(size)
    h = size // 2
    shift = _round_robin_shift(size)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for _ in range(size - 1):
            top, bot = at[:h], at[h:][::-1]
            alpha = np.einsum("ij,ij->i", top, top)
            beta = np.einsum("ij,ij->i", bot, bot)
            gamma = np.einsum("ij,ij->i", top, bot)
            active = np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta)
            if active.any():
                g = np.where(active, gamma, 1.0)
                # zeta overflows to inf only for subnormal gamma; t is then 0 (no rotation)
                with np.errstate(over="ignore"):
                    zeta = (beta - alpha) / (2.0 * g)
                    t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
                t = np.where(active, t, 0.0)
                rotated = rotated or bool(np.any(t != 0.0))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = (c * t)[:, None]
                c = c[:, None]
                new_top, new_bot = c * top - s * bot, s * top + c * bot
                at[:h], at[h:] = new_top, new_bot[::-1]
                vtop, vbot = vt[:h], vt[h:][::-1]
                new_top, new_bot = c * vtop - s * vbot, s * vtop + c * vbot
                vt[:h], vt[h:] = new_top, new_bot[::-1]
            at = at[shift]
            vt = vt[shift]
        if not rotated:
            break
    return at[:n].T.copy(), vt[:n, :n].T.copy()


def _complete_basis(u: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Replace the columns of u not marked in `filled` with unit vectors
    orthogonal to all other columns, chosen greedily from the standard basis."""
    u = u.copy()
    m = u.shape[0]
    keep = list(np.flatnonzero(filled))
    for j in np.flatnonzero(~filled):
        basis = u[:, keep]
        cand = np.eye(m)
        for _ in range(2):
            cand = cand - basis @ (basis.T @ cand)
        norms = np.linalg.norm(cand, axis=0)
        best = int(np.argmax(norms))
        u[:, j] = cand[:, best] / norms[best]
        keep.append(j)
    return u


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> None:
    for j in range(u.shape[1]):
        nz = np.flatnonzero(np.abs(u[:, j]) > 1e-12)
        if nz.size and u[nz[0], j] < 0:
            u[:, j] *= -1.0
            vt[j, :] *= -1.0


def thin_svd(m) -> SvdResult:
    m = as_matrix(m)
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        raise ShapeError(f"thin_svd needs a nonempty matrix, got {rows}x{cols}")
    if not np.all(np.isfinite(m)):
        raise NumericInputError("thin_svd input contains NaN or Inf")
    transposed = rows < cols
    work = m.T if transposed else m

    a, v = _jacobi_columns(work)
    s = np.linalg.norm(a, axis=0)
    order = np.argsort(-s, kind="stable")
    s, a, v = s[order], a[:, order], v[:, order]

    null_tol = (s[0] if s.size else 0.0) * max(work.shape) * np.finfo(np.float64).eps
    live = s > null_tol
    u = np.zeros_like(a)
    u[:, live] = a[:, live] / s[live]
    s = np.where(live, s, 0.0)
    if not live.all():
        u = _complete_basis(u, live)

    if transposed:
        # m.T = u s v.T  =>  m = v s u.T
        u, vt = v, u.T.copy()
    else:
        vt = v.T.copy()
    _fix_signs(u, vt)
    return SvdResult(U=u, singular_values=s, Vt=vt)


def orthonormalize(columns, drop_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis for the numerically independent columns, in input order.

    Modified Gram-Schmidt with one re-orthogonalization pass; a column whose
    residual norm falls below drop_tol is discarded.
    """
    if drop_tol <= 0:
        raise ValueError("drop_tol must be positive")
    c = as_matrix(columns, "columns")
    kept: list[np.ndarray] = []
    for j in range(c.shape[1]):
        r = c[:, j].copy()
        for _ in range(2):
            for b in kept:
                r -= (b @ r) * b
        norm = np.linalg.norm(r)
        if norm >= drop_tol:
            kept.append(r / norm)
    if not kept:
        return np.zeros((c.shape[0], 0))
    return np.column_stack(kept)
