"""Per-layer shared gradient space built from end-of-task first moments.

A space is an orthonormal basis (m x q) of row-space directions that past
tasks relied on, with one importance score (the singular value it was
selected with) per column. New gradients are projected onto the orthogonal
complement of the basis before they reach the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gorp.errors import ParseError, ShapeError, SpecError, UsageError
from gorp.linalg import as_matrix, frobenius_norm_sq, thin_svd


@dataclass
class SubspaceConfig:
    threshold: float = 0.97
    capacity: int = 64
    drop_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise SpecError(f"subspace threshold must be in (0, 1], got {self.threshold}")
        # capacity 0 disables the memory entirely (used for baseline equivalence runs)
        if self.capacity < 0:
            raise SpecError(f"subspace capacity must be >= 0, got {self.capacity}")
        if self.drop_tol <= 0:
            raise SpecError(f"drop_tol must be positive, got {self.drop_tol}")


@dataclass
class GradientSharedSpace:
    layer_id: str
    basis: np.ndarray
    importance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    capacity: int = 64

    @classmethod
    def empty(cls, layer_id: str, rows: int, capacity: int = 64) -> "GradientSharedSpace":
        return cls(layer_id, np.zeros((rows, 0)), np.zeros(0), capacity)

    @property
    def rows(self) -> int:
        return self.basis.shape[0]

    @property
    def q(self) -> int:
        return self.basis.shape[1]

    def orthonormality_error(self) -> float:
        if self.q == 0:
            return 0.0
        return float(np.max(np.abs(self.basis.T @ self.basis - np.eye(self.q))))


def krank_select(singular_values, total_energy: float, carried_energy: float, threshold: float) -> int:
    """Smallest k with carried + sum(s[:k]**2) >= threshold * total, capped at len(s)."""
    s = np.asarray(singular_values, dtype=np.float64)
    if s.ndim != 1:
        raise UsageError("singular values must be a 1-D sequence")
    if s.size > 1 and np.any(np.diff(s) > 0):
        raise UsageError("singular values must be sorted in nonincreasing order")
    if not 0.0 < threshold <= 1.0:
        raise UsageError(f"threshold must be in (0, 1], got {threshold}")
    if carried_energy < 0 or total_energy < carried_energy:
        raise UsageError(
            f"need total_energy >= carried_energy >= 0, got total={total_energy}, carried={carried_energy}"
        )
    bound = threshold * total_energy
    energy = float(carried_energy)
    for k, sv in enumerate(s):
        if energy >= bound:
            return k
        energy += float(sv) * float(sv)
    return int(s.size)


def _live_spectrum(moment: np.ndarray):
    svd = thin_svd(moment)
    live = int(np.count_nonzero(svd.singular_values > 0))
    return svd.U[:, :live], svd.singular_values[:live]


def build_first(moment, cfg: SubspaceConfig, layer_id: str = "") -> GradientSharedSpace:
    m = as_matrix(moment, "moment")
    total = frobenius_norm_sq(m)
    if total == 0.0 or cfg.capacity == 0:
        return GradientSharedSpace.empty(layer_id, m.shape[0], cfg.capacity)
    u, s = _live_spectrum(m)
    k = min(krank_select(s, total, 0.0, cfg.threshold), cfg.capacity)
    return GradientSharedSpace(layer_id, u[:, :k].copy(), s[:k].copy(), cfg.capacity)


def extend(space: GradientSharedSpace, moment, cfg: SubspaceConfig) -> GradientSharedSpace:
    """Add the dominant directions of `moment` that the space does not already hold."""
    m = as_matrix(moment, "moment")
    if m.shape[0] != space.rows:
        raise ShapeError(f"moment has {m.shape[0]} rows but the space basis has {space.rows}")
    total = frobenius_norm_sq(m)
    if total == 0.0:
        return space
    if space.q == 0:
        grown = build_first(m, cfg, space.layer_id)
        grown.capacity = space.capacity
        return truncate_to_capacity(grown)

    basis = space.basis
    coeffs = basis.T @ m
    carried = min(frobenius_norm_sq(coeffs), total)
    residual = m - basis @ coeffs
    if frobenius_norm_sq(residual) == 0.0:
        return space
    u, s = _live_spectrum(residual)
    k = krank_select(s, total, carried, cfg.threshold)

    cols = [basis[:, j] for j in range(space.q)]
    importance = list(space.importance)
    for j in range(k):
        r = u[:, j].copy()
        for _ in range(2):
            r -= basis @ (basis.T @ r)
        norm = np.linalg.norm(r)
        if norm < cfg.drop_tol:
            continue
        r /= norm
        cols.append(r)
        importance.append(s[j])
        basis = np.column_stack(cols)
    grown = GradientSharedSpace(space.layer_id, np.column_stack(cols), np.asarray(importance), space.capacity)
    return truncate_to_capacity(grown)


def truncate_to_capacity(space: GradientSharedSpace) -> GradientSharedSpace:
    if space.q <= space.capacity:
        return space
    ranked = np.argsort(-space.importance, kind="stable")[: space.capacity]
    keep = np.sort(ranked)
    return GradientSharedSpace(
        space.layer_id, space.basis[:, keep].copy(), space.importance[keep].copy(), space.capacity
    )


def project_out(space: GradientSharedSpace, g) -> np.ndarray:
    """Remove the components of g's columns that lie in span(basis)."""
    g = as_matrix(g, "gradient")
    if g.shape[0] != space.rows:
        raise ShapeError(f"gradient has {g.shape[0]} rows but the space basis has {space.rows}")
    if space.q == 0:
        return g.copy()
    return g - space.basis @ (space.basis.T @ g)


def save_space(space: GradientSharedSpace, path) -> None:
    lines = [f"{space.rows} {space.q}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in space.basis]
    lines.append(" ".join(repr(float(x)) for x in space.importance))
    Path(path).write_text("\n".join(lines) + "\n")


def load_space(path, layer_id: str = "", capacity: int = 64) -> GradientSharedSpace:
    path = Path(path)
    lines = path.read_text().split("\n")
    try:
        rows, q = (int(x) for x in lines[0].split())
    except ValueError:
        raise ParseError("header must be 'm q'", 1, str(path)) from None
    if len(lines) < rows + 2:
        raise ParseError(f"expected {rows} basis rows and an importance line", len(lines), str(path))
    basis = np.zeros((rows, q))
    for i in range(rows):
        fields = lines[1 + i].split()
        if len(fields) != q:
            raise ParseError(f"expected {q} values, got {len(fields)}", 2 + i, str(path))
        basis[i] = [float(x) for x in fields]
    importance = np.array([float(x) for x in lines[1 + rows].split()])
    if importance.size != q:
        raise ParseError(f"expected {q} importance values", 2 + rows, str(path))
    return GradientSharedSpace(layer_id, basis, importance, capacity)
