"""Boundary-condition enforcement strategies over assembled residuals.

Five ways to drive the boundary residuals of a strong-form PINN to zero:

* standard penalty: fixed quadratic weight beta;
* learning-rate annealing: per-region beta balancing the max interior
  gradient against the mean boundary gradient through a moving average;
* self-adaptive penalties: a trainable per-point penalty field ascending on
  the pointwise squared residual;
* min-max Lagrange multipliers: a per-point multiplier field ascending on
  the signed residual;
* Augmented Lagrangian: multiplier plus growing penalty, re-minimizing the
  objective between multiplier updates in an outer/inner loop.

All strategies consume the same weighted objective from losses.Assembler;
network parameters always descend with ADAM, auxiliary fields move by plain
gradient ascent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .losses import Assembler, LossEvaluation, ResidualBundle, TermWeights
from .mlp import MlpParams, flatten_params, init_mlp, unflatten_params
from .optim import AdamState, adam_step, gd_step

__all__ = [
    "BoundaryState",
    "ConvergenceCriteria",
    "MethodParams",
    "TrainHistory",
    "DivergedError",
    "penalty_objective",
    "augmented_lagrangian_objective",
    "lra_beta_update",
    "sa_pinn_step",
    "lagrange_minmax_step",
    "al_multiplier_update",
    "PinnProblem",
    "al_minimize",
    "train_fixed",
    "al_solve",
    "penalty_solve",
    "lra_solve",
    "sa_solve",
    "minmax_solve",
]


class DivergedError(RuntimeError):
    """Objective or gradient became non-finite during training."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


@dataclass
class BoundaryState:
    """Per-point multiplier and penalty fields for both boundary regions."""

    lambda_d: np.ndarray  # (Md, fd)
    lambda_n: np.ndarray  # (Mn, fd)
    beta_d: np.ndarray  # (Md, fd)
    beta_n: np.ndarray  # (Mn, fd)
    gamma: float = 2.0
    outer_iter: int = 0

    @classmethod
    def initial(
        cls,
        n_dirichlet: int,
        n_flux: int,
        field_dim: int,
        beta0: float = 1.0,
        lambda0: float = 0.0,
        gamma: float = 2.0,
    ) -> "BoundaryState":
        if gamma <= 1.0:
            raise ValueError(f"penalty growth factor must exceed 1, got {gamma}")
        if beta0 <= 0.0:
            raise ValueError(f"initial penalty must be positive, got {beta0}")
        shape_d, shape_n = (n_dirichlet, field_dim), (n_flux, field_dim)
        return cls(
            lambda_d=np.full(shape_d, float(lambda0)),
            lambda_n=np.full(shape_n, float(lambda0)),
            beta_d=np.full(shape_d, float(beta0)),
            beta_n=np.full(shape_n, float(beta0)),
            gamma=float(gamma),
        )

    def weights(self) -> TermWeights:
        return TermWeights(
            lam_d=self.lambda_d, beta_d=self.beta_d,
            lam_n=self.lambda_n, beta_n=self.beta_n,
        )

    def beta_max(self) -> float:
        parts = [b.max() for b in (self.beta_d, self.beta_n) if b.size]
        return float(max(parts)) if parts else 0.0

    def copy(self) -> "BoundaryState":
        return BoundaryState(
            self.lambda_d.copy(), self.lambda_n.copy(),
            self.beta_d.copy(), self.beta_n.copy(),
            self.gamma, self.outer_iter,
        )


@dataclass
class ConvergenceCriteria:
    """Stopping thresholds for the Augmented Lagrangian loop."""

    z_f: float = 5e-3  # relative objective threshold
    b_f: float = 1e-2  # boundary-error threshold
    r_f: float = 1e-2  # relative gradient-norm threshold (inner loop)
    max_epochs: int = 50_000  # safeguard; timing out is reported, never silent

    def __post_init__(self):
        if min(self.z_f, self.b_f, self.r_f) <= 0:
            raise ValueError("convergence thresholds must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass
class MethodParams:
    """Hyperparameters shared by the enforcement strategies."""

    beta: float = 1.0  # fixed penalty (penalty method)
    alpha: float = 0.9  # moving-average weight (annealing)
    gamma: float = 2.0  # penalty growth per outer iteration (AL)
    beta0: float = 1.0  # initial penalty (annealing, SA, AL)
    lr_beta: float = 0.5  # penalty-field ascent rate (SA)
    lr_lambda: float = 1e-2  # multiplier-field ascent rate (min-max)


@dataclass
class TrainHistory:
    """Per-epoch training record in history.csv column order."""

    epoch: list[int] = field(default_factory=list)
    outer_iter: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    boundary_error: list[float] = field(default_factory=list)
    interior_error: list[float] = field(default_factory=list)
    beta_max: list[float] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    def append(self, epoch, outer, objective, grad_norm, b_err, i_err, beta_max):
        self.epoch.append(int(epoch))
        self.outer_iter.append(int(outer))
        self.objective.append(float(objective))
        self.grad_norm.append(float(grad_norm))
        self.boundary_error.append(float(b_err))
        self.interior_error.append(float(i_err))
        self.beta_max.append(float(beta_max))

    def __len__(self):
        return len(self.epoch)


# --------------------------------------------------------------------------
# objective algebra and field updates


def penalty_objective(bundle: ResidualBundle, beta: float) -> float:
    """interior + (beta/2) sum dA |r|^2 over both boundary regions."""
    if beta < 0:
        raise ValueError(f"penalty must be non-negative, got {beta}")
    total = bundle.interior_loss
    for res, areas in (
        (bundle.dirichlet_residuals, bundle.dirichlet_areas),
        (bundle.flux_residuals, bundle.flux_areas),
    ):
        if len(res):
            total += 0.5 * beta * float((areas[:, None] * res * res).sum())
    return total


def augmented_lagrangian_objective(bundle: ResidualBundle, state: BoundaryState) -> float:
    """interior + sum dA (lam . r) + (1/2) sum dA (beta . r^2), signed."""
    total = bundle.interior_loss
    for res, areas, lam, beta in (
        (bundle.dirichlet_residuals, bundle.dirichlet_areas, state.lambda_d, state.beta_d),
        (bundle.flux_residuals, bundle.flux_areas, state.lambda_n, state.beta_n),
    ):
        if len(res):
            if lam.shape != res.shape or beta.shape != res.shape:
                raise ValueError(
                    f"state shapes {lam.shape}/{beta.shape} do not match "
                    f"residuals {res.shape}"
                )
            a = areas[:, None]
            total += float((a * lam * res).sum())
            total += 0.5 * float((a * beta * res * res).sum())
    return total


def lra_beta_update(
    beta_prev: float, grad_pde: np.ndarray, grad_bc: np.ndarray, alpha: float
) -> float:
    """Moving-average penalty: beta_hat = max|grad_pde| / mean|grad_bc|."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    denom = float(np.mean(np.abs(grad_bc)))
    if denom == 0.0:
        warnings.warn("boundary gradient vanished; keeping previous penalty")
        return float(beta_prev)
    beta_hat = float(np.max(np.abs(grad_pde))) / denom
    return (1.0 - alpha) * float(beta_prev) + alpha * beta_hat


def sa_pinn_step(
    bundle: ResidualBundle, state: BoundaryState, lr_beta: float
) -> BoundaryState:
    """Gradient ascent of the penalty field on its pointwise term.

    d/d(beta_j) of (1/2) sum dA beta r^2 is dA_j r_j^2 / 2, so points with
    zero residual leave their penalty untouched.
    """
    if lr_beta <= 0:
        raise ValueError(f"penalty learning rate must be positive, got {lr_beta}")
    out = state.copy()
    if len(bundle.dirichlet_residuals):
        g = 0.5 * bundle.dirichlet_areas[:, None] * bundle.dirichlet_residuals**2
        out.beta_d = gd_step(state.beta_d, g, lr_beta, "ascend")
    if len(bundle.flux_residuals):
        g = 0.5 * bundle.flux_areas[:, None] * bundle.flux_residuals**2
        out.beta_n = gd_step(state.beta_n, g, lr_beta, "ascend")
    return out


def lagrange_minmax_step(
    bundle: ResidualBundle, state: BoundaryState, lr_lambda: float
) -> BoundaryState:
    """Gradient ascent of the multiplier field on the signed residual."""
    if lr_lambda <= 0:
        raise ValueError(f"multiplier learning rate must be positive, got {lr_lambda}")
    out = state.copy()
    if len(bundle.dirichlet_residuals):
        g = bundle.dirichlet_areas[:, None] * bundle.dirichlet_residuals
        out.lambda_d = gd_step(state.lambda_d, g, lr_lambda, "ascend")
    if len(bundle.flux_residuals):
        g = bundle.flux_areas[:, None] * bundle.flux_residuals
        out.lambda_n = gd_step(state.lambda_n, g, lr_lambda, "ascend")
    return out


def al_multiplier_update(state: BoundaryState, bundle: ResidualBundle) -> BoundaryState:
    """lambda += beta * r elementwise; beta *= gamma; advance the outer index."""
    out = state.copy()
    if len(bundle.dirichlet_residuals):
        out.lambda_d = state.lambda_d + state.beta_d * bundle.dirichlet_residuals
    if len(bundle.flux_residuals):
        out.lambda_n = state.lambda_n + state.beta_n * bundle.flux_residuals
    out.beta_d = state.gamma * state.beta_d
    out.beta_n = state.gamma * state.beta_n
    out.outer_iter = state.outer_iter + 1
    return out


# --------------------------------------------------------------------------
# trainable problems


class PinnProblem:
    """Flat-vector view of a PINN boundary value problem for the drivers."""

    def __init__(self, spec, interior, partition, layer_sizes, chunk=None):
        kw = {} if chunk is None else {"chunk": chunk}
        self.assembler = Assembler(spec, interior, partition, **kw)
        self.layer_sizes = list(layer_sizes)
        self.n_dirichlet = partition.dirichlet.count
        self.n_flux = partition.neumann_or_robin.count
        self.field_dim = spec.field_dim

    def init_theta(self, seed: int) -> np.ndarray:
        return flatten_params(init_mlp(self.layer_sizes, seed))

    def evaluate(self, theta: np.ndarray, weights: TermWeights,
                 need_grad: bool = True, split: bool = False) -> LossEvaluation:
        params = unflatten_params(self.layer_sizes, theta)
        return self.assembler.evaluate(params, weights, need_grad=need_grad,
                                       split=split)

    def to_params(self, theta: np.ndarray) -> MlpParams:
        return unflatten_params(self.layer_sizes, theta)


def _check_finite(ev: LossEvaluation, epoch: int):
    if not np.isfinite(ev.objective):
        raise DivergedError(epoch, f"objective became {ev.objective!r} at epoch {epoch}")
    if ev.grad is not None and not np.all(np.isfinite(ev.grad)):
        raise DivergedError(epoch, f"gradient became non-finite at epoch {epoch}")


# --------------------------------------------------------------------------
# fixed-epoch drivers: penalty, annealing, self-adaptive, min-max


def train_fixed(
    problem,
    theta: np.ndarray,
    method: str,
    epochs: int,
    lr: float,
    params: MethodParams | None = None,
) -> tuple[np.ndarray, BoundaryState, TrainHistory]:
    """Train for a fixed epoch budget with one enforcement strategy.

    method is one of 'penalty', 'lra', 'sa', 'minmax'.  Returns the final
    flat parameter vector, the final auxiliary fields, and the per-epoch
    history (exactly `epochs` rows).
    """
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, got {epochs}")
    mp = params or MethodParams()
    theta = np.asarray(theta, dtype=float).copy()
    adam = AdamState.fresh(len(theta), lr=lr)
    nd, nn, fd = problem.n_dirichlet, problem.n_flux, problem.field_dim

    if method == "penalty":
        state = BoundaryState.initial(nd, nn, fd, beta0=mp.beta)
        state.lambda_d[:] = 0.0
    elif method == "lra":
        state = BoundaryState.initial(nd, nn, fd, beta0=mp.beta0)
        beta_region = {"d": float(mp.beta0), "n": float(mp.beta0)}
    elif method == "sa":
        state = BoundaryState.initial(nd, nn, fd, beta0=mp.beta0)
    elif method == "minmax":
        state = BoundaryState.initial(nd, nn, fd, beta0=1.0)
        state.beta_d[:] = 0.0
        state.beta_n[:] = 0.0
    else:
        raise ValueError(f"unknown method {method!r}")

    history = TrainHistory()
    for epoch in range(epochs):
        if method == "lra":
            ev = problem.evaluate(theta, state.weights(), split=True)
            _check_finite(ev, epoch)
            # update the per-region penalties first, then step the parameters
            if nd and ev.grad_dirichlet_unit is not None:
                beta_region["d"] = lra_beta_update(
                    beta_region["d"], ev.grad_interior, ev.grad_dirichlet_unit, mp.alpha
                )
                state.beta_d[:] = beta_region["d"]
            if nn and ev.grad_flux_unit is not None:
                beta_region["n"] = lra_beta_update(
                    beta_region["n"], ev.grad_interior, ev.grad_flux_unit, mp.alpha
                )
                state.beta_n[:] = beta_region["n"]
            grad = ev.grad_interior.copy()
            if nd:
                grad += beta_region["d"] * ev.grad_dirichlet_unit
            if nn:
                grad += beta_region["n"] * ev.grad_flux_unit
            objective = augmented_lagrangian_objective(ev.bundle, state)
        else:
            ev = problem.evaluate(theta, state.weights())
            _check_finite(ev, epoch)
            grad = ev.grad
            objective = ev.objective

        history.append(
            epoch, 0, objective, np.linalg.norm(grad),
            ev.boundary_error, ev.interior_error, state.beta_max(),
        )
        theta = adam_step(adam, theta, grad)

        if method == "sa":
            state = sa_pinn_step(ev.bundle, state, mp.lr_beta)
        elif method == "minmax":
            state = lagrange_minmax_step(ev.bundle, state, mp.lr_lambda)

    history.stop_reason = "epochs"
    return theta, state, history


# --------------------------------------------------------------------------
# Augmented Lagrangian outer/inner loop


def al_minimize(
    problem,
    theta: np.ndarray,
    criteria: ConvergenceCriteria,
    lr: float,
    params: MethodParams | None = None,
    stop_on_criteria: bool = True,
    max_outer: int = 64,
    verbose: bool = False,
) -> tuple[np.ndarray, BoundaryState, TrainHistory]:
    """Outer/inner Augmented Lagrangian loop.

    Inner: ADAM on the weighted objective until the gradient norm falls to
    r_f times its value at the initial parameters.  Outer: multiplier and
    penalty update, until the boundary error is at or below b_f and the
    objective has dropped to z_f of its initial value (both conditions), or
    a safeguard fires.  ADAM moments are carried across outer iterations.
    """
    mp = params or MethodParams()
    theta = np.asarray(theta, dtype=float).copy()
    state = BoundaryState.initial(
        problem.n_dirichlet, problem.n_flux, problem.field_dim,
        beta0=mp.beta0, gamma=mp.gamma,
    )
    adam = AdamState.fresh(len(theta), lr=lr)
    history = TrainHistory()

    ev = problem.evaluate(theta, state.weights())
    _check_finite(ev, 0)
    z0 = ev.objective
    r0 = float(np.linalg.norm(ev.grad))
    grad_threshold = criteria.r_f * r0
    z_ratio = 1.0
    b_err = ev.boundary_error
    epoch = 0

    def criteria_met():
        return b_err <= criteria.b_f and z_ratio <= criteria.z_f

    while True:
        if stop_on_criteria and criteria_met():
            history.converged = True
            history.stop_reason = "criteria"
            break
        if epoch >= criteria.max_epochs:
            history.stop_reason = "max_epochs"
            break
        if state.outer_iter >= max_outer:
            history.stop_reason = "max_outer"
            break

        # inner loop: descend until the gradient norm falls below threshold
        while float(np.linalg.norm(ev.grad)) > grad_threshold and epoch < criteria.max_epochs:
            history.append(
                epoch, state.outer_iter, ev.objective, np.linalg.norm(ev.grad),
                ev.boundary_error, ev.interior_error, state.beta_max(),
            )
            theta = adam_step(adam, theta, ev.grad)
            epoch += 1
            ev = problem.evaluate(theta, state.weights())
            _check_finite(ev, epoch)

        # convergence bookkeeping at the inner solution, with the multiplier
        # and penalty fields that produced it
        z_ratio = ev.objective / z0
        b_err = ev.boundary_error
        if verbose:
            print(
                f"  outer {state.outer_iter:2d}: epoch {epoch}, "
                f"beta_max {state.beta_max():g}, Z/Z0 {z_ratio:.3e}, "
                f"B {b_err:.3e}, I {ev.interior_error:.3e}",
                flush=True,
            )

        state = al_multiplier_update(state, ev.bundle)
        ev = problem.evaluate(theta, state.weights())
        _check_finite(ev, epoch)

    return theta, state, history


# --------------------------------------------------------------------------
# problem-level wrappers


def _make_problem(spec, grids, net: MlpParams, chunk=None) -> tuple[PinnProblem, np.ndarray]:
    interior, partition = grids
    problem = PinnProblem(spec, interior, partition, net.layer_sizes, chunk=chunk)
    return problem, flatten_params(net)


def al_solve(
    spec,
    grids,
    net: MlpParams,
    criteria: ConvergenceCriteria,
    lr: float,
    params: MethodParams | None = None,
    stop_on_criteria: bool = True,
    chunk=None,
    verbose: bool = False,
) -> tuple[MlpParams, BoundaryState, TrainHistory]:
    problem, theta0 = _make_problem(spec, grids, net, chunk)
    theta, state, history = al_minimize(
        problem, theta0, criteria, lr, params,
        stop_on_criteria=stop_on_criteria, verbose=verbose,
    )
    return problem.to_params(theta), state, history


def _fixed_solve(method):
    def solve(spec, grids, net, epochs, lr, params=None, chunk=None):
        problem, theta0 = _make_problem(spec, grids, net, chunk)
        theta, state, history = train_fixed(problem, theta0, method, epochs, lr, params)
        return problem.to_params(theta), state, history

    solve.__name__ = f"{method}_solve"
    solve.__doc__ = f"Fixed-epoch training with the {method} strategy."
    return solve


penalty_solve = _fixed_solve("penalty")
lra_solve = _fixed_solve("lra")
sa_solve = _fixed_solve("sa")
minmax_solve = _fixed_solve("minmax")
