"""Loss assembly: interior strong-form quadrature plus boundary residuals.

The Assembler precomputes forcing and boundary data on fixed quadrature
grids and then evaluates, per parameter vector, the interior loss
(1/2) sum_i dV |r_i|^2 together with per-point Dirichlet and flux residual
vectors.  All boundary-enforcement strategies consume the same weighted
objective

    J = interior + sum dA (lam . r + beta/2 |r|^2)

with their own choice of multiplier and penalty fields, so one fused
evaluate() serves penalty, annealing, self-adaptive, min-max, and augmented
formulations alike.  Evaluation is chunked over points with reused buffers;
reductions are sequential and deterministic.

The one-dimensional multiscale-bar demonstration (strong versus
Petrov-Galerkin weak losses on fixed trapezoid quadrature) lives here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .geometry import BoundaryPartition, InteriorGrid, SurfaceQuadrature
from .mlp import (
    MODE_GRAD,
    MODE_LAP,
    MODE_VALUE,
    JetCotangent,
    MlpParams,
    Workspace,
    backward_stack,
    forward_stack,
)
from .physics import ProblemSpec, get_problem, manufactured_forcing, solution_jets, solution_pullback

__all__ = [
    "ResidualBundle",
    "TermWeights",
    "LossEvaluation",
    "Assembler",
    "assemble",
    "hat_function",
    "weak_form_loss_1d",
    "strong_form_loss_1d",
    "Bar1dLosses",
    "bar_exact_solution",
]

DEFAULT_CHUNK = 4096


@dataclass
class ResidualBundle:
    """Interior loss plus raw boundary residual vectors with their weights."""

    interior_loss: float
    dirichlet_residuals: np.ndarray  # (Md, fd): u_hat - g
    dirichlet_areas: np.ndarray  # (Md,)
    flux_residuals: np.ndarray  # (Mn, fd): flux gap (Neumann or Robin)
    flux_areas: np.ndarray  # (Mn,)


@dataclass
class TermWeights:
    """Multiplier and penalty fields for the weighted boundary terms."""

    lam_d: np.ndarray | float = 0.0
    beta_d: np.ndarray | float = 0.0
    lam_n: np.ndarray | float = 0.0
    beta_n: np.ndarray | float = 0.0


@dataclass
class LossEvaluation:
    """One objective evaluation: bundle, weighted objective, and gradients."""

    bundle: ResidualBundle
    objective: float
    grad: np.ndarray | None = None
    grad_interior: np.ndarray | None = None  # split for gradient balancing
    grad_dirichlet_unit: np.ndarray | None = None  # grad of 1/2 sum dA |r_d|^2
    grad_flux_unit: np.ndarray | None = None  # grad of 1/2 sum dA |r_n|^2
    boundary_error: float = np.nan  # relative L1 against g on the Dirichlet set
    interior_error: float = np.nan  # relative L1 against the exact solution
    uhat_interior: np.ndarray | None = None


def _weighted_boundary_terms(res, areas, lam, beta):
    """(sum dA lam.r, 1/2 sum dA beta |r|^2) with per-component fields."""
    if len(res) == 0:
        return 0.0, 0.0
    lam = np.broadcast_to(lam, res.shape)
    beta = np.broadcast_to(beta, res.shape)
    a = areas[:, None]
    return float((a * lam * res).sum()), float(0.5 * (a * beta * res * res).sum())


class Assembler:
    """Evaluates the weighted objective and its parameter gradient.

    Forcing, boundary data, and error-measure denominators are frozen at
    construction; evaluate() is then a pure function of the parameters and
    the term weights.
    """

    def __init__(
        self,
        spec: ProblemSpec,
        interior: InteriorGrid,
        partition: BoundaryPartition,
        chunk: int = DEFAULT_CHUNK,
    ):
        if spec.operator is None:
            raise ValueError(f"problem {spec.name} has no residual operator")
        self.spec = spec
        self.op = spec.operator
        self.mode = self.op.mode
        self.fd = spec.field_dim
        self.interior = interior
        self.partition = partition
        self.chunk = int(chunk)
        self.ws = Workspace()

        self.x_i = interior.points
        self.dv = interior.delta_v
        if spec.exact is not None:
            self.f_i = manufactured_forcing(spec, self.x_i)
            self.u_exact_i = spec.exact.value(self.x_i)
            self._denom_i = float(
                self.dv * np.linalg.norm(self.u_exact_i, axis=1).sum()
            )
        else:
            self.f_i = np.zeros((len(self.x_i), self.fd))
            self.u_exact_i = None
            self._denom_i = np.nan

        quad_d = partition.dirichlet
        self.x_d = quad_d.points
        self.area_d = quad_d.areas
        self.g_d = (
            spec.dirichlet_data(self.x_d) if len(self.x_d) else np.zeros((0, self.fd))
        )
        self._denom_b = (
            float((self.area_d * np.linalg.norm(self.g_d, axis=1)).sum())
            if len(self.x_d)
            else np.nan
        )

        quad_n = partition.neumann_or_robin
        self.x_n = quad_n.points
        self.area_n = quad_n.areas
        self.normal_n = quad_n.normals
        if len(self.x_n):
            if spec.flux_kind not in ("neumann", "robin"):
                raise ValueError(
                    f"problem {spec.name} owns flux-boundary points but declares "
                    f"flux_kind={spec.flux_kind!r}"
                )
            self.flux_data_n = spec.flux_data(self.x_n, self.normal_n)
        else:
            self.flux_data_n = np.zeros((0, self.fd))

    # ------------------------------------------------------------ pieces

    def interior_residuals(self, params: MlpParams) -> np.ndarray:
        """Pointwise strong-form residuals on the interior grid, (N, fd)."""
        out = np.empty((len(self.x_i), self.fd))
        for lo in range(0, len(self.x_i), self.chunk):
            xc = self.x_i[lo : lo + self.chunk]
            stack = forward_stack(params, xc, self.mode, ws=self.ws, keep=False)
            sol = solution_jets(self.spec, xc, stack.out)
            out[lo : lo + len(xc)] = self.op.apply(xc, sol, self.f_i[lo : lo + len(xc)])
        return out

    def solution_values(self, params: MlpParams, points: np.ndarray) -> np.ndarray:
        """u_hat = D * N at arbitrary points, chunked, (n, fd)."""
        out = np.empty((len(points), self.fd))
        for lo in range(0, len(points), self.chunk):
            xc = points[lo : lo + self.chunk]
            stack = forward_stack(params, xc, MODE_VALUE, ws=self.ws, keep=False)
            sol = solution_jets(self.spec, xc, stack.out)
            out[lo : lo + len(xc)] = sol.value
        return out

    # ------------------------------------------------------------ evaluate

    def evaluate(
        self,
        params: MlpParams,
        weights: TermWeights | None = None,
        need_grad: bool = True,
        split: bool = False,
    ) -> LossEvaluation:
        weights = weights or TermWeights()
        if split and not need_grad:
            raise ValueError("split gradients require need_grad=True")
        n_params = params.n_params
        grad_interior = np.zeros(n_params) if (need_grad or split) else None
        grad_d = np.zeros(n_params) if need_grad and len(self.x_d) else None
        grad_n = np.zeros(n_params) if need_grad and len(self.x_n) else None
        grad_d_unit = np.zeros(n_params) if split and len(self.x_d) else None
        grad_n_unit = np.zeros(n_params) if split and len(self.x_n) else None

        lam_d = np.broadcast_to(weights.lam_d, (len(self.x_d), self.fd))
        beta_d = np.broadcast_to(weights.beta_d, (len(self.x_d), self.fd))
        lam_n = np.broadcast_to(weights.lam_n, (len(self.x_n), self.fd))
        beta_n = np.broadcast_to(weights.beta_n, (len(self.x_n), self.fd))

        interior_loss = 0.0
        err_num = 0.0
        uhat = np.empty((len(self.x_i), self.fd))
        for lo in range(0, len(self.x_i), self.chunk):
            xc = self.x_i[lo : lo + self.chunk]
            stack = forward_stack(params, xc, self.mode, ws=self.ws)
            sol = solution_jets(self.spec, xc, stack.out)
            r = self.op.apply(xc, sol, self.f_i[lo : lo + len(xc)])
            if not np.all(np.isfinite(r)):
                bad = int(np.nonzero(~np.isfinite(r).all(axis=1))[0][0])
                raise FloatingPointError(
                    f"non-finite interior residual at point {xc[bad]}"
                )
            interior_loss += 0.5 * self.dv * float((r * r).sum())
            uhat[lo : lo + len(xc)] = sol.value
            if self.u_exact_i is not None:
                diff = sol.value - self.u_exact_i[lo : lo + len(xc)]
                err_num += self.dv * float(np.linalg.norm(diff, axis=1).sum())
            if need_grad or split:
                bar_sol = self.op.pullback(xc, sol, self.dv * r)
                bar_raw = solution_pullback(self.spec, xc, stack.out, bar_sol)
                backward_stack(stack, bar_raw, ws=self.ws, out_grad=grad_interior)

        r_d = np.zeros((len(self.x_d), self.fd))
        for lo in range(0, len(self.x_d), self.chunk):
            xc = self.x_d[lo : lo + self.chunk]
            stack = forward_stack(params, xc, MODE_VALUE, ws=self.ws)
            sol = solution_jets(self.spec, xc, stack.out)
            rc = sol.value - self.g_d[lo : lo + len(xc)]
            r_d[lo : lo + len(xc)] = rc
            if need_grad:
                a = self.area_d[lo : lo + len(xc), None]
                w = a * (lam_d[lo : lo + len(xc)] + beta_d[lo : lo + len(xc)] * rc)
                bar_raw = solution_pullback(
                    self.spec, xc, stack.out, JetCotangent(bar_value=w)
                )
                backward_stack(stack, bar_raw, ws=self.ws, out_grad=grad_d)
                if split:
                    bar_unit = solution_pullback(
                        self.spec, xc, stack.out, JetCotangent(bar_value=a * rc)
                    )
                    backward_stack(stack, bar_unit, ws=self.ws, out_grad=grad_d_unit)

        r_n = np.zeros((len(self.x_n), self.fd))
        robin = self.spec.flux_kind == "robin"
        sigma = self.spec.robin_sigma
        for lo in range(0, len(self.x_n), self.chunk):
            xc = self.x_n[lo : lo + self.chunk]
            nc = self.normal_n[lo : lo + self.chunk]
            stack = forward_stack(params, xc, MODE_GRAD, ws=self.ws)
            sol = solution_jets(self.spec, xc, stack.out)
            gn = np.einsum("nkf,nk->nf", sol.grad, nc)
            data = self.flux_data_n[lo : lo + len(xc)]
            if robin:
                rc = -gn - data - sigma * sol.value**4
            else:
                rc = gn - data
            r_n[lo : lo + len(xc)] = rc
            if need_grad:
                a = self.area_n[lo : lo + len(xc), None]
                w = a * (lam_n[lo : lo + len(xc)] + beta_n[lo : lo + len(xc)] * rc)
                for wc, target in ((w, grad_n),) + (
                    ((a * rc, grad_n_unit),) if split else ()
                ):
                    sign = -1.0 if robin else 1.0
                    bar_grad = sign * nc[:, :, None] * wc[:, None, :]
                    bar_value = (-4.0 * sigma * sol.value**3 * wc) if robin else None
                    bar_sol = JetCotangent(bar_value=bar_value, bar_grad=bar_grad)
                    bar_raw = solution_pullback(self.spec, xc, stack.out, bar_sol)
                    backward_stack(stack, bar_raw, ws=self.ws, out_grad=target)

        bundle = ResidualBundle(
            interior_loss=interior_loss,
            dirichlet_residuals=r_d,
            dirichlet_areas=self.area_d,
            flux_residuals=r_n,
            flux_areas=self.area_n,
        )
        lin_d, quad_d = _weighted_boundary_terms(r_d, self.area_d, lam_d, beta_d)
        lin_n, quad_n = _weighted_boundary_terms(r_n, self.area_n, lam_n, beta_n)
        objective = interior_loss + lin_d + quad_d + lin_n + quad_n

        grad = None
        if need_grad:
            grad = grad_interior.copy()
            if grad_d is not None:
                grad += grad_d
            if grad_n is not None:
                grad += grad_n

        b_err = np.nan
        if len(self.x_d) and np.isfinite(self._denom_b) and self._denom_b > 0:
            b_err = float(
                (self.area_d * np.linalg.norm(r_d, axis=1)).sum() / self._denom_b
            )
        i_err = np.nan
        if self.u_exact_i is not None and self._denom_i > 0:
            i_err = err_num / self._denom_i

        return LossEvaluation(
            bundle=bundle,
            objective=objective,
            grad=grad,
            grad_interior=grad_interior if split else None,
            grad_dirichlet_unit=grad_d_unit,
            grad_flux_unit=grad_n_unit,
            boundary_error=b_err,
            interior_error=i_err,
            uhat_interior=uhat,
        )


def assemble(
    params: MlpParams,
    spec: ProblemSpec,
    interior: InteriorGrid,
    partition: BoundaryPartition,
) -> ResidualBundle:
    """Residual bundle at the current parameters (no gradients)."""
    asm = Assembler(spec, interior, partition)
    return asm.evaluate(params, need_grad=False).bundle


# --------------------------------------------------------------------------
# one-dimensional multiscale bar demonstration


def hat_function(i: int, n: int, x) -> np.ndarray | float:
    """Piecewise-linear hat v_i(x) = max(0, 1 - |x - i/(n+1)| (n+1))."""
    xv = np.asarray(x, dtype=float)
    v = np.maximum(0.0, 1.0 - np.abs(xv - i / (n + 1.0)) * (n + 1.0))
    return float(v) if np.isscalar(x) else v


class Bar1dLosses:
    """Strong and Petrov-Galerkin weak losses for the multiscale bar.

    Both are integrated with composite trapezoid weights on a fixed fine
    grid; the weak loss tests the residual against n_hat piecewise-linear
    hat functions.
    """

    def __init__(self, n_hat: int = 18, n_quad: int = 2001, chunk: int = DEFAULT_CHUNK):
        if n_hat < 1:
            raise ValueError(f"need at least one hat function, got {n_hat}")
        if n_quad < 2:
            raise ValueError(f"need at least two quadrature points, got {n_quad}")
        self.spec = get_problem("bar1d")
        self.op = self.spec.operator
        self.n_hat = n_hat
        x = np.linspace(0.0, 1.0, n_quad)
        self.x = x[:, None]
        w = np.full(n_quad, x[1] - x[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        self.w = w
        self.vmat = np.stack([hat_function(i, n_hat, x) for i in range(1, n_hat + 1)])
        self.chunk = chunk
        self.ws = Workspace()

    def _residual_stacks(self, params):
        stack = forward_stack(params, self.x, MODE_LAP, ws=self.ws)
        sol = solution_jets(self.spec, self.x, stack.out)
        f = np.zeros((len(self.x), 1))
        r = self.op.apply(self.x, sol, f)[:, 0]
        return stack, sol, r

    def _grad_from_rbar(self, stack, sol, rbar):
        bar_sol = self.op.pullback(self.x, sol, rbar[:, None])
        bar_raw = solution_pullback(self.spec, self.x, stack.out, bar_sol)
        return backward_stack(stack, bar_raw, ws=self.ws)

    def strong(self, params: MlpParams, need_grad: bool = True):
        """(1/2) integral of the squared pointwise residual."""
        stack, sol, r = self._residual_stacks(params)
        loss = 0.5 * float(self.w @ (r * r))
        if not need_grad:
            return loss, None
        return loss, self._grad_from_rbar(stack, sol, self.w * r)

    def weak(self, params: MlpParams, need_grad: bool = True):
        """(1/2) sum_i (integral of residual times hat_i)^2."""
        stack, sol, r = self._residual_stacks(params)
        proj = self.vmat @ (self.w * r)  # (n_hat,)
        loss = 0.5 * float(proj @ proj)
        if not need_grad:
            return loss, None
        rbar = (proj @ self.vmat) * self.w
        return loss, self._grad_from_rbar(stack, sol, rbar)


def strong_form_loss_1d(params: MlpParams, quad_points: int = 2001) -> float:
    return Bar1dLosses(n_quad=quad_points).strong(params, need_grad=False)[0]


def weak_form_loss_1d(params: MlpParams, n_hat: int, quad_points: int = 2001) -> float:
    return Bar1dLosses(n_hat=n_hat, n_quad=quad_points).weak(params, need_grad=False)[0]


def bar_exact_solution(x) -> np.ndarray | float:
    """Exact bar displacement by double quadrature.

    Integrating the balance once gives k(x) u' = C - (100/pi)(1 - cos(pi x));
    a second integration from 0 with u(1) = 0 fixes C.  Adaptive quadrature
    to 1e-10 absolute tolerance.
    """

    def k(s):
        return 1.0 + 0.5 * np.sin(20.0 * np.pi * s)

    def load(s):
        return (100.0 / np.pi) * (1.0 - np.cos(np.pi * s))

    def a_int(t):
        return quad(lambda s: 1.0 / k(s), 0.0, t, epsabs=1e-10, limit=200)[0]

    def b_int(t):
        return quad(lambda s: load(s) / k(s), 0.0, t, epsabs=1e-10, limit=200)[0]

    c = b_int(1.0) / a_int(1.0)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.array([c * a_int(t) - b_int(t) for t in xv])
    return float(u[0]) if np.isscalar(x) or np.ndim(x) == 0 else u
