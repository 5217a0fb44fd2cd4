"""GORP: Adam on gradients projected away from the shared gradient space.

Full-rank weights get their (already projected) gradient compressed onto the
top-r left singular vectors U_r, which are refreshed every `refresh_period`
steps. Adam runs in the compressed coordinates and the result is mapped back
with U_r. LoRA A gradients are projected but not compressed; LoRA B
gradients are used as they are.

All shared-space bookkeeping lives in the ambient row space of each weight.
Gradients are projected before compression, and the final first moment is
lifted with U_r before it extends the space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gorp.errors import InvariantError, ShapeError, SpecError
from gorp.linalg import frobenius_norm_sq, orthonormalize, thin_svd
from gorp.net import FULL, Model
from gorp.subspace import GradientSharedSpace, SubspaceConfig, extend, project_out

ORTHOGONALITY_TOL = 1e-8
# singular directions weaker than this (relative to the largest) are left out of U_r
PROJECTOR_RANGE_TOL = 1e-10


@dataclass
class GorpConfig:
    lr_lora: float = 1e-4
    lr_full: float = 1e-3
    scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    rank: int = 8
    refresh_period: int = 10
    two_sided: bool = False
    identity_projection: bool = False
    bias_correction: bool = False
    check_orthogonality: bool = False
    subspace: SubspaceConfig = field(default_factory=SubspaceConfig)

    def __post_init__(self):
        if isinstance(self.subspace, dict):
            self.subspace = SubspaceConfig(**self.subspace)
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise SpecError("beta1 and beta2 must lie in [0, 1)")
        if self.lr_lora <= 0 or self.lr_full <= 0:
            raise SpecError("learning rates must be positive")
        if self.refresh_period < 1:
            raise SpecError("refresh_period must be >= 1")
        if self.rank < 1:
            raise SpecError("rank must be >= 1")
        if self.adam_eps < 0:
            raise SpecError("adam_eps must be nonnegative")


@dataclass
class GorpState:
    key: str
    kind: str  # "full", "lora_A" or "lora_B"
    M: np.ndarray
    V: np.ndarray
    t: int = 1
    projector: np.ndarray | None = None
    right_projector: np.ndarray | None = None
    task_start_step: int = 1
    compressed: bool = False

    @property
    def steps_in_task(self) -> int:
        return self.t - self.task_start_step


def param_kind(key: str, model: Model) -> str:
    layer_name, pname = key.rsplit(".", 1)
    if model.layer(layer_name).kind == FULL:
        return "full"
    return f"lora_{pname}"


def init_state(key: str, kind: str, shape: tuple[int, int], cfg: GorpConfig | None = None) -> GorpState:
    return GorpState(key, kind, np.zeros(shape), np.zeros(shape))


def refresh_projector(
    state: GorpState, g: np.ndarray, cfg: GorpConfig, space: GradientSharedSpace | None = None
) -> GorpState:
    """Recompute U_r at the first step of a task and every refresh_period steps after it.

    `g` is the uncompressed gradient (already projected away from `space`
    when one is given). Singular directions outside g's numerical range are
    zero columns of U_r, so they never carry an update.
    """
    if cfg.identity_projection:
        if state.projector is None:
            state.projector = np.eye(g.shape[0])
            state.right_projector = np.eye(g.shape[1]) if cfg.two_sided else None
            state.compressed = False
        return state
    due = state.projector is None or state.steps_in_task % cfg.refresh_period == 0
    if not due:
        return state

    svd = thin_svd(g)
    r = min(cfg.rank, svd.singular_values.size)
    s = svd.singular_values[:r]
    live = s > PROJECTOR_RANGE_TOL * max(svd.singular_values[0], np.finfo(float).tiny)
    u = np.zeros((g.shape[0], r))
    v = np.zeros((g.shape[1], r))
    if live.any():
        u_live = svd.U[:, :r][:, live]
        if space is not None and space.q:
            u_live = project_out(space, u_live)
        u_live = orthonormalize(u_live, drop_tol=1e-6)
        u[:, : u_live.shape[1]] = u_live
        v_live = svd.Vt[:r][live].T
        v[:, : v_live.shape[1]] = v_live
    state.projector = u
    state.right_projector = v if cfg.two_sided else None
    state.compressed = True

    shape = (r, r) if cfg.two_sided else (r, g.shape[1])
    if state.M.shape != shape:
        if np.any(state.M) or np.any(state.V):
            raise InvariantError(f"{state.key}: moment shape changed mid-task")
        state.M = np.zeros(shape)
        state.V = np.zeros(shape)
    return state


def adam_direction(state: GorpState, p: np.ndarray, cfg: GorpConfig) -> np.ndarray:
    """Moment recurrences on the projected gradient p; returns M / sqrt(V + eps)."""
    if p.shape != state.M.shape:
        raise ShapeError(f"{state.key}: projected gradient {p.shape} vs moments {state.M.shape}")
    state.M = cfg.beta1 * state.M + (1.0 - cfg.beta1) * p
    state.V = cfg.beta2 * state.V + (1.0 - cfg.beta2) * (p * p)
    m, v = state.M, state.V
    if cfg.bias_correction:
        k = state.steps_in_task + 1
        m = m / (1.0 - cfg.beta1**k)
        v = v / (1.0 - cfg.beta2**k)
    state.t += 1
    return m / np.sqrt(v + cfg.adam_eps)


def check_orthogonal(space: GradientSharedSpace, p_amb: np.ndarray, key: str = "") -> float:
    """Ratio ||S^T P||_F / max(1, ||P||_F); raises when above ORTHOGONALITY_TOL."""
    if space.q == 0:
        return 0.0
    ratio = np.sqrt(frobenius_norm_sq(space.basis.T @ p_amb)) / max(1.0, np.sqrt(frobenius_norm_sq(p_amb)))
    if ratio > ORTHOGONALITY_TOL:
        raise InvariantError(f"{key}: projected gradient leaks into the shared space (ratio {ratio:.3e})")
    return float(ratio)


def step(
    state: GorpState,
    param: np.ndarray,
    g: np.ndarray,
    space: GradientSharedSpace | None,
    cfg: GorpConfig,
) -> np.ndarray:
    """One GORP update of `param` in place. Returns the ambient projected gradient."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != param.shape:
        raise ShapeError(f"{state.key}: gradient {g.shape} does not match parameter {param.shape}")

    if state.kind == "lora_B" or space is None:
        g_amb = g
    else:
        g_amb = project_out(space, g)
        if cfg.check_orthogonality:
            check_orthogonal(space, g_amb, state.key)

    if state.kind == "full":
        refresh_projector(state, g_amb, cfg, space)
        if state.projector is None:
            raise InvariantError(f"{state.key}: no projector for a full-rank compress")
        u = state.projector
        p = u.T @ g_amb
        if cfg.two_sided:
            p = p @ state.right_projector
        direction = adam_direction(state, p, cfg)
        back = u @ direction
        if cfg.two_sided:
            back = back @ state.right_projector.T
        update = cfg.scale * back
        lr = cfg.lr_full
    else:
        update = cfg.scale * adam_direction(state, g_amb, cfg)
        lr = cfg.lr_lora
    param -= lr * update
    return g_amb


def ambient_moment(state: GorpState) -> np.ndarray:
    """First moment mapped back to the parameter's own coordinates."""
    if state.kind != "full" or state.projector is None:
        return state.M
    out = state.projector @ state.M
    if state.right_projector is not None:
        out = out @ state.right_projector.T
    return out


def finalize_task(
    states: dict[str, GorpState], spaces: dict[str, GradientSharedSpace], cfg: GorpConfig
) -> dict[str, GradientSharedSpace]:
    """Fold each layer's end-of-task moment into its space and reset the optimizer state."""
    out = dict(spaces)
    for key, state in states.items():
        if key in spaces:
            moment = ambient_moment(state)
            if frobenius_norm_sq(moment) > 0.0:
                out[key] = extend(spaces[key], moment, cfg.subspace)
        state.M = np.zeros_like(state.M)
        state.V = np.zeros_like(state.V)
        state.projector = None
        state.right_projector = None
        state.compressed = False
        state.task_start_step = state.t
    return out


class GorpOptimizer:
    """Drives `step` over every trainable matrix of a model.

    `keys` restricts training to a subset of parameters (the rest stay
    frozen). With `plain=True` nothing is projected or compressed and the
    optimizer is ordinary Adam without bias correction.
    """

    def __init__(self, model: Model, cfg: GorpConfig, keys=None, plain: bool = False):
        self.model = model
        self.cfg = cfg
        self.plain = plain
        params = model.parameters()
        self.keys = list(params) if keys is None else list(keys)
        self.states: dict[str, GorpState] = {}
        self.spaces: dict[str, GradientSharedSpace] = {}
        self.tasks_done = 0
        self.worst_orthogonality = 0.0
        for key in self.keys:
            kind = param_kind(key, model)
            self.states[key] = init_state(key, kind, params[key].shape, cfg)
            if not plain and kind in ("full", "lora_A"):
                self.spaces[key] = GradientSharedSpace.empty(key, params[key].shape[0], cfg.subspace.capacity)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        params = self.model.parameters()
        for key in self.keys:
            state = self.states[key]
            if self.plain:
                g = np.asarray(grads[key], dtype=np.float64)
                if g.shape != params[key].shape:
                    raise ShapeError(f"{key}: gradient {g.shape} does not match parameter {params[key].shape}")
                update = self.cfg.scale * adam_direction(state, g, self.cfg)
                lr = self.cfg.lr_full if state.kind == "full" else self.cfg.lr_lora
                params[key] -= lr * update
                continue
            space = self.spaces.get(key)
            g_amb = step(state, params[key], grads[key], space, self.cfg)
            if space is not None and space.q:
                ratio = np.sqrt(frobenius_norm_sq(space.basis.T @ g_amb)) / max(
                    1.0, np.sqrt(frobenius_norm_sq(g_amb))
                )
                self.worst_orthogonality = max(self.worst_orthogonality, float(ratio))
        self.model.mark_updated()

    def first_moments(self) -> dict[str, np.ndarray]:
        return {key: ambient_moment(state).copy() for key, state in self.states.items()}

    def finalize_task(self) -> None:
        if self.plain:
            for state in self.states.values():
                state.M = np.zeros_like(state.M)
                state.V = np.zeros_like(state.V)
                state.task_start_step = state.t
        else:
            self.spaces = finalize_task(self.states, self.spaces, self.cfg)
        self.tasks_done += 1
