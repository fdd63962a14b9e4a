"""Model-agnostic meta-learning of the mirror-descent initialization.

A collection of deployments (tasks), each with its own small gain
sample, shares structure: an initialization adapted to the collection
lets a new deployment reach a good allocation from very few samples.
Training alternates two levels:

* inner: each task takes exactly one Jacobi sweep (one ``gd_step`` on
  ``u`` and one ``eg_step`` on the shares) from the shared point on its
  own data;
* outer: the sum of the tasks' post-adaptation smoothed tail objectives
  is climbed in the same mirror geometry, so the outer gradients chain
  through the inner step map (its Jacobian) before the mirror updates.

The Jacobian-vector products of the inner step map are computed by
forward-mode directional differentiation: the step map is evaluated on
complex points ``x + i h e_j`` and the imaginary part recovers the exact
directional derivative to machine precision (``jacobian_mode="exact"``).
A central-difference fallback (``"finite-difference"``) and the
first-order approximation that drops the Jacobians entirely
(``"first-order"``) are available for cross-checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParameterError
from .fading import GainDataset, model_from_dict, sample_gains
from .ldm import _LN2, RiskSpec, _weighted_surrogate
from .optim import _clip_grad, _eg_update, eg_step, gd_step
from .risk import tail_weights

__all__ = [
    "TaskSet",
    "MetaConfig",
    "MetaTrace",
    "inner_adapt",
    "meta_objective",
    "meta_gd_step",
    "meta_eg_step",
    "maml_train",
]

_CSTEP = 1e-20  # forward-mode perturbation size; error is O(h^2)


@dataclass(frozen=True)
class TaskSet:
    """One gain dataset per deployment."""

    datasets: tuple

    def __post_init__(self):
        ds = tuple(self.datasets)
        if not ds:
            raise ParameterError("TaskSet needs at least one task")
        if not all(isinstance(d, GainDataset) for d in ds):
            raise ParameterError("TaskSet entries must be GainDataset instances")
        object.__setattr__(self, "datasets", ds)

    def __len__(self) -> int:
        return len(self.datasets)

    @classmethod
    def from_dir(cls, path) -> "TaskSet":
        """Load every ``*.csv`` in a directory (sorted by name) as one task."""
        files = sorted(Path(path).glob("*.csv"))
        if not files:
            raise ParameterError(f"no task CSV files found in {path}")
        return cls(datasets=tuple(GainDataset.from_csv(f) for f in files))

    @classmethod
    def from_models(cls, models, n: int, seed: int) -> "TaskSet":
        """Draw an ``n``-sample dataset per model, seeded per task."""
        return cls(
            datasets=tuple(sample_gains(m, n, [int(seed), i]) for i, m in enumerate(models))
        )

    @classmethod
    def from_json(cls, text_or_path) -> "TaskSet":
        """Task spec JSON: {"n": ..., "seed": ..., "models": [model, ...]}."""
        p = Path(str(text_or_path))
        text = p.read_text() if p.suffix == ".json" and p.exists() else str(text_or_path)
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid task set JSON: {exc}") from exc
        try:
            models = [model_from_dict(md) for md in d["models"]]
            return cls.from_models(models, int(d["n"]), int(d.get("seed", 0)))
        except (TypeError, KeyError) as exc:
            raise ParameterError(f"task set JSON needs 'models' and 'n': {exc}") from exc


@dataclass
class MetaConfig:
    """Knobs of the meta-training loop.

    ``eta``/``gamma`` drive the single inner sweep; the outer rates
    default to ``eta / D`` and ``gamma / D`` for ``D`` tasks (set
    ``meta_eta``/``meta_gamma`` to override).  The outer loop runs a
    fixed ``meta_iters`` sweeps.  The start point is a standard-normal
    ``u`` (seeded) with uniform shares unless given explicitly.
    """

    eta: float = 0.01
    gamma: float = 0.01
    meta_eta: float | None = None
    meta_gamma: float | None = None
    meta_iters: int = 2000
    jacobian_mode: str = "exact"
    fd_step: float = 1e-6
    m: int | None = None
    u_init: np.ndarray | None = None
    lambda_init: np.ndarray | None = None
    seed: int | None = None
    grad_clip: float = 1e6

    def __post_init__(self):
        if self.jacobian_mode not in ("exact", "finite-difference", "first-order"):
            raise ParameterError(f"unknown jacobian_mode {self.jacobian_mode!r}")
        if not (np.isfinite(self.eta) and self.eta > 0) or not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ParameterError("inner step sizes must be positive")
        if self.meta_iters < 0:
            raise ParameterError(f"meta_iters must be >= 0, got {self.meta_iters}")
        if not (np.isfinite(self.fd_step) and self.fd_step > 0):
            raise ParameterError(f"fd_step must be positive, got {self.fd_step}")
        if self.u_init is not None:
            self.u_init = np.asarray(self.u_init, dtype=float)
        if self.lambda_init is not None:
            self.lambda_init = np.asarray(self.lambda_init, dtype=float)

    def layers(self) -> int:
        if self.u_init is not None:
            return int(np.asarray(self.u_init).size)
        if self.m is not None:
            return int(self.m)
        raise ParameterError("config needs either m or an explicit u_init")

    def outer_rates(self, d_tasks: int) -> tuple[float, float]:
        eta_bar = self.eta / d_tasks if self.meta_eta is None else self.meta_eta
        gamma_bar = self.gamma / d_tasks if self.meta_gamma is None else self.meta_gamma
        return eta_bar, gamma_bar

    def start_point(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.layers()
        if self.u_init is not None:
            u = np.array(self.u_init, dtype=float)
        else:
            u = np.random.default_rng(self.seed).standard_normal(m)
        if self.lambda_init is not None:
            lam = np.array(self.lambda_init, dtype=float)
            lam = lam / lam.sum()
        else:
            lam = np.full(m, 1.0 / m)
        if u.shape != lam.shape:
            raise ParameterError("u_init and lambda_init must have the same length")
        return u, lam

    @classmethod
    def from_dict(cls, d: dict) -> "MetaConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ParameterError(f"unknown meta config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text_or_path) -> "MetaConfig":
        p = Path(str(text_or_path))
        text = p.read_text() if p.suffix == ".json" and p.exists() else str(text_or_path)
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid meta config JSON: {exc}") from exc


@dataclass(frozen=True)
class MetaTrace:
    """Objective path (sum of post-adaptation task objectives) and final init."""

    objectives: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    iterations: int

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("iter,objective\n")
            for i, v in enumerate(self.objectives):
                f.write(f"{i},{float(v)!r}\n")


def inner_adapt(u, lam, data: GainDataset, spec: RiskSpec, config: MetaConfig):
    """One Jacobi sweep on one task's data: both blocks step from (u, lam)."""
    u_t = gd_step(u, lam, data, spec, config.eta, config.grad_clip)
    lam_t = eg_step(lam, u, data, spec, config.gamma, config.grad_clip)
    return u_t, lam_t


def _post_adapt_value_and_grads(u_t, lam_t, data: GainDataset, spec: RiskSpec):
    """Objective and mirror gradients at an adapted point (bits)."""
    k, w = tail_weights(data.n, spec.beta)
    s_t = np.exp(u_t)
    val, gs, gl = _weighted_surrogate(s_t, lam_t, data.gains[:k], w, spec.power, spec.c)
    return float(val) / _LN2, s_t * gs / _LN2, gl / _LN2


def meta_objective(u, lam, tasks: TaskSet, spec: RiskSpec, config: MetaConfig) -> float:
    """Sum over tasks of the smoothed tail objective after one inner sweep."""
    total = 0.0
    for data in tasks.datasets:
        u_t, lam_t = inner_adapt(u, lam, data, spec, config)
        val, _, _ = _post_adapt_value_and_grads(u_t, lam_t, data, spec)
        total += val
    return total


def _inner_jacobians(u, lam, data: GainDataset, spec: RiskSpec, config: MetaConfig):
    """Jacobian blocks of the inner step map at (u, lam).

    Returns (Ju_u, Jl_u, Ju_l, Jl_l) where Ju_u[i, j] = d u_tau[i] / d u[j],
    Jl_u[i, j] = d lam_tau[i] / d u[j], and the *_l blocks differentiate
    with respect to lam.
    """
    m = u.size
    eye = np.eye(m)
    if config.jacobian_mode == "first-order":
        zero = np.zeros((m, m))
        return eye, zero, zero, eye

    if config.jacobian_mode == "exact":
        h = _CSTEP
        pert = 1j * h * eye
        u_block = np.vstack((u[None, :] + pert, np.broadcast_to(u, (m, m))))
        lam_block = np.vstack((np.broadcast_to(lam, (m, m)), lam[None, :] + pert))
        u_t, lam_t = inner_adapt(u_block, lam_block, data, spec, config)
        ju = u_t.imag / h  # row j = d u_tau / d (perturbed coord j)
        jl = lam_t.imag / h
        return ju[:m].T, jl[:m].T, ju[m:].T, jl[m:].T

    # central finite differences on the step map
    h = config.fd_step
    pert = h * eye
    u_block = np.vstack(
        (u[None, :] + pert, u[None, :] - pert, np.broadcast_to(u, (2 * m, m)))
    )
    lam_block = np.vstack(
        (np.broadcast_to(lam, (2 * m, m)), lam[None, :] + pert, lam[None, :] - pert)
    )
    u_t, lam_t = inner_adapt(u_block, lam_block, data, spec, config)
    # row layout: [u+h; u-h; lam+h; lam-h], m rows per block
    du_u = (u_t[:m] - u_t[m : 2 * m]) / (2 * h)
    dl_u = (lam_t[:m] - lam_t[m : 2 * m]) / (2 * h)
    du_l = (u_t[2 * m : 3 * m] - u_t[3 * m :]) / (2 * h)
    dl_l = (lam_t[2 * m : 3 * m] - lam_t[3 * m :]) / (2 * h)
    return du_u.T, dl_u.T, du_l.T, dl_l.T


def _meta_grads(u, lam, tasks: TaskSet, spec: RiskSpec, config: MetaConfig):
    """Outer objective value and its gradients with respect to (u, lam)."""
    m = u.size
    total = 0.0
    grad_u = np.zeros(m)
    grad_lam = np.zeros(m)
    for data in tasks.datasets:
        u_t, lam_t = inner_adapt(u, lam, data, spec, config)
        val, a, b = _post_adapt_value_and_grads(u_t, lam_t, data, spec)
        ju_u, jl_u, ju_l, jl_l = _inner_jacobians(u, lam, data, spec, config)
        total += val
        grad_u += ju_u.T @ a + jl_u.T @ b
        grad_lam += ju_l.T @ a + jl_l.T @ b
    if not (np.isfinite(total) and np.all(np.isfinite(grad_u)) and np.all(np.isfinite(grad_lam))):
        raise NumericalError("meta-gradient became non-finite")
    return total, grad_u, grad_lam


def meta_gd_step(u, lam, tasks: TaskSet, spec: RiskSpec, config: MetaConfig) -> np.ndarray:
    """One outer ascent step on ``u``, chaining through the inner step map."""
    _, grad_u, _ = _meta_grads(u, lam, tasks, spec, config)
    eta_bar, _ = config.outer_rates(len(tasks))
    return u + eta_bar * _clip_grad(grad_u, config.grad_clip)


def meta_eg_step(lam, u, tasks: TaskSet, spec: RiskSpec, config: MetaConfig) -> np.ndarray:
    """One outer exponentiated-gradient step on the shares."""
    _, _, grad_lam = _meta_grads(u, lam, tasks, spec, config)
    _, gamma_bar = config.outer_rates(len(tasks))
    return _eg_update(lam, gamma_bar * _clip_grad(grad_lam, config.grad_clip))


def maml_train(tasks: TaskSet, spec: RiskSpec, config: MetaConfig):
    """Meta-train an initialization on a task collection.

    The outer loop runs a fixed number of ascent steps and returns the
    iterate with the highest recorded outer objective: with a fixed
    step size the late iterates can overshoot and oscillate, and the
    training objective itself is the only selection signal available.

    Returns
    -------
    (u, lam, trace) : arrays and MetaTrace
        The learned initialization in mirror coordinates and the
        verbatim outer-objective path.
    """
    u, lam = config.start_point()
    eta_bar, gamma_bar = config.outer_rates(len(tasks))
    objectives = []
    best_val, best_u, best_lam = -np.inf, u, lam
    for _ in range(config.meta_iters):
        val, grad_u, grad_lam = _meta_grads(u, lam, tasks, spec, config)
        objectives.append(val)
        if val > best_val:
            best_val, best_u, best_lam = val, u, lam
        u = u + eta_bar * _clip_grad(grad_u, config.grad_clip)
        lam = _eg_update(lam, gamma_bar * _clip_grad(grad_lam, config.grad_clip))
    final = meta_objective(u, lam, tasks, spec, config)
    objectives.append(final)
    if final > best_val:
        best_val, best_u, best_lam = final, u, lam
    trace = MetaTrace(
        objectives=np.array(objectives), u=best_u, lam=best_lam,
        iterations=config.meta_iters,
    )
    return best_u, best_lam, trace
