import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelpinn.enforce import (
    BoundaryState,
    ConvergenceCriteria,
    DivergedError,
    MethodParams,
    TrainHistory,
    al_minimize,
    al_multiplier_update,
    augmented_lagrangian_objective,
    lagrange_minmax_step,
    lra_beta_update,
    penalty_objective,
    sa_pinn_step,
    train_fixed,
)
from levelpinn.losses import LossEvaluation, ResidualBundle, TermWeights

rng = np.random.default_rng(42)


def make_bundle(interior=1.0, r_d=None, a_d=None, r_n=None, a_n=None):
    r_d = np.zeros((0, 1)) if r_d is None else np.atleast_2d(np.asarray(r_d, float)).T
    a_d = np.zeros(0) if a_d is None else np.asarray(a_d, float)
    r_n = np.zeros((0, 1)) if r_n is None else np.atleast_2d(np.asarray(r_n, float)).T
    a_n = np.zeros(0) if a_n is None else np.asarray(a_n, float)
    return ResidualBundle(interior, r_d, a_d, r_n, a_n)


def make_state(md=0, mn=0, beta0=1.0, lambda0=0.0, gamma=2.0):
    return BoundaryState.initial(md, mn, 1, beta0=beta0, lambda0=lambda0, gamma=gamma)


class ToyConstraint:
    """min (1/2) theta^2 subject to theta = 1, with the identity as network.

    One Dirichlet-style constraint point of unit area; the stationary point
    is theta* = 1, lambda* = -1.
    """

    n_dirichlet = 1
    n_flux = 0
    field_dim = 1

    def evaluate(self, theta, weights, need_grad=True, split=False):
        t = float(theta[0])
        r = t - 1.0
        lam = float(np.broadcast_to(weights.lam_d, (1, 1))[0, 0])
        beta = float(np.broadcast_to(weights.beta_d, (1, 1))[0, 0])
        objective = 0.5 * t * t + lam * r + 0.5 * beta * r * r
        grad = np.array([t + lam + beta * r]) if need_grad else None
        bundle = make_bundle(0.5 * t * t, r_d=[r], a_d=[1.0])
        return LossEvaluation(
            bundle=bundle, objective=objective, grad=grad,
            grad_interior=np.array([t]) if split else None,
            grad_dirichlet_unit=np.array([r]) if split else None,
            boundary_error=abs(r), interior_error=np.nan,
        )


# ------------------------------------------------------------ state

def test_state_validation():
    with pytest.raises(ValueError):
        BoundaryState.initial(2, 0, 1, gamma=1.0)
    with pytest.raises(ValueError):
        BoundaryState.initial(2, 0, 1, beta0=0.0)


def test_criteria_validation():
    with pytest.raises(ValueError):
        ConvergenceCriteria(z_f=0.0)
    with pytest.raises(ValueError):
        ConvergenceCriteria(max_epochs=0)


# ------------------------------------------------------------ objectives

def test_penalty_objective_beta_zero():
    bundle = make_bundle(2.5, r_d=[1.0, -2.0], a_d=[0.3, 0.7])
    assert penalty_objective(bundle, 0.0) == 2.5


def test_penalty_objective_zero_residuals():
    bundle = make_bundle(2.5, r_d=[0.0, 0.0], a_d=[0.3, 0.7])
    assert penalty_objective(bundle, 123.0) == 2.5


def test_al_objective_worked_example():
    # one Dirichlet point, dA=1, residual 2, lambda 3, beta 4
    bundle = make_bundle(1.5, r_d=[2.0], a_d=[1.0])
    state = make_state(md=1, beta0=4.0, lambda0=3.0)
    assert augmented_lagrangian_objective(bundle, state) == pytest.approx(1.5 + 14.0)


def test_al_objective_zero_residuals_is_interior():
    bundle = make_bundle(0.8, r_d=[0.0, 0.0], a_d=[1.0, 1.0])
    state = make_state(md=2, beta0=7.0, lambda0=3.0)
    assert augmented_lagrangian_objective(bundle, state) == pytest.approx(0.8)


def test_al_objective_shape_mismatch():
    bundle = make_bundle(0.8, r_d=[0.0, 0.0], a_d=[1.0, 1.0])
    state = make_state(md=3)
    with pytest.raises(ValueError):
        augmented_lagrangian_objective(bundle, state)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.1, 10.0), st.integers(0, 2**31 - 1))
def test_al_reduces_to_penalty_when_lambda_zero(md, beta0, seed):
    r = np.random.default_rng(seed).normal(size=md)
    a = np.random.default_rng(seed + 1).uniform(0.1, 1.0, size=md)
    bundle = make_bundle(1.0, r_d=r, a_d=a)
    state = make_state(md=md, beta0=beta0, lambda0=0.0)
    lhs = augmented_lagrangian_objective(bundle, state)
    rhs = penalty_objective(bundle, beta0)
    assert lhs == pytest.approx(rhs, abs=1e-12)


# ------------------------------------------------------------ updates

def test_lra_update_examples():
    assert lra_beta_update(5.0, np.array([4.0, -2.0]), np.array([1.0, 1.0]), 1.0) == 4.0
    c = 0.37
    g = np.full(4, c)
    assert lra_beta_update(2.0, g, g, 1.0) == pytest.approx(1.0)
    assert lra_beta_update(2.0, g, 2 * g, 0.0) == 2.0


def test_lra_update_zero_guard():
    with pytest.warns(UserWarning):
        out = lra_beta_update(3.0, np.array([1.0]), np.zeros(3), 0.9)
    assert out == 3.0


def test_sa_step_examples():
    bundle = make_bundle(0.0, r_d=[2.0], a_d=[1.0])
    state = make_state(md=1, beta0=1.0)
    out = sa_pinn_step(bundle, state, 0.5)
    assert out.beta_d[0, 0] == pytest.approx(2.0)  # 1 + 0.5 * (4/2)

    bundle0 = make_bundle(0.0, r_d=[0.0], a_d=[1.0])
    out0 = sa_pinn_step(bundle0, state, 0.5)
    assert out0.beta_d[0, 0] == 1.0


def test_sa_fixed_point_when_residuals_zero():
    bundle = make_bundle(0.0, r_d=[0.0, 0.0, 0.0], a_d=np.ones(3))
    state = make_state(md=3, beta0=2.0)
    out = sa_pinn_step(bundle, state, 0.5)
    assert np.array_equal(out.beta_d, state.beta_d)


def test_minmax_step_examples():
    bundle = make_bundle(0.0, r_d=[-1.0], a_d=[1.0])
    state = make_state(md=1)
    state.lambda_d[:] = 0.0
    out = lagrange_minmax_step(bundle, state, 0.01)
    assert out.lambda_d[0, 0] == pytest.approx(-0.01)

    bundle0 = make_bundle(0.0, r_d=[0.0], a_d=[1.0])
    out0 = lagrange_minmax_step(bundle0, state, 0.01)
    assert out0.lambda_d[0, 0] == 0.0


def test_al_update_examples():
    bundle = make_bundle(0.0, r_d=[0.0, 0.0], a_d=np.ones(2))
    state = make_state(md=2, beta0=1.0, gamma=2.0)
    out = al_multiplier_update(state, bundle)
    assert np.array_equal(out.lambda_d, state.lambda_d)
    assert np.array_equal(out.beta_d, 2.0 * state.beta_d)
    assert out.outer_iter == 1

    bundle2 = make_bundle(0.0, r_d=[0.5], a_d=[1.0])
    state2 = make_state(md=1, beta0=1.0)
    out2 = al_multiplier_update(state2, bundle2)
    assert out2.lambda_d[0, 0] == pytest.approx(0.5)
    assert out2.beta_d[0, 0] == pytest.approx(2.0)


def test_beta_reaches_2048_after_11_updates():
    state = make_state(md=1, beta0=1.0, gamma=2.0)
    bundle = make_bundle(0.0, r_d=[0.1], a_d=[1.0])
    for _ in range(11):
        state = al_multiplier_update(state, bundle)
    assert state.beta_max() == 2048.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_beta_monotone_over_random_updates(md, n_updates, seed):
    state = make_state(md=md, beta0=1.0, gamma=2.0)
    g = np.random.default_rng(seed)
    prev = state.beta_d.copy()
    for _ in range(n_updates):
        bundle = make_bundle(0.0, r_d=g.normal(size=md), a_d=np.ones(md))
        state = al_multiplier_update(state, bundle)
        assert np.all(state.beta_d > prev)
        assert np.all(np.isfinite(state.lambda_d))
        prev = state.beta_d.copy()


# ------------------------------------------------------------ KKT toy

TOY_CRITERIA = ConvergenceCriteria(z_f=10.0, b_f=1e-7, r_f=1e-6, max_epochs=200_000)


@pytest.mark.parametrize("seed", range(20))
def test_al_toy_converges_to_kkt_point(seed):
    theta0 = np.array([np.random.default_rng(seed).normal()])
    theta, state, history = al_minimize(
        ToyConstraint(), theta0, TOY_CRITERIA, lr=0.1,
        params=MethodParams(beta0=1.0, gamma=2.0),
    )
    assert abs(theta[0] - 1.0) <= 1e-6, f"seed {seed}: theta {theta[0]}"
    assert abs(state.lambda_d[0, 0] + 1.0) <= 1e-4, f"seed {seed}"
    assert history.converged


def test_al_toy_beta_sequence_doubles():
    theta0 = np.array([0.0])
    _, _, history = al_minimize(
        ToyConstraint(), theta0, TOY_CRITERIA, lr=0.1, params=MethodParams()
    )
    betas = np.array(history.beta_max)
    outers = np.array(history.outer_iter)
    seen = {}
    for o, b in zip(outers, betas):
        seen.setdefault(int(o), b)
        assert seen[int(o)] == b  # constant within an outer iteration
    levels = [seen[o] for o in sorted(seen)]
    assert levels == [2.0**k for k in range(len(levels))]


def test_al_history_beta_strictly_increasing_by_gamma():
    _, _, history = al_minimize(
        ToyConstraint(), np.array([2.0]), TOY_CRITERIA, lr=0.1,
        params=MethodParams(gamma=2.0),
    )
    b = np.array(history.beta_max)
    changes = b[1:][b[1:] != b[:-1]] / b[:-1][b[1:] != b[:-1]]
    assert np.allclose(changes, 2.0)


class _ExplodingProblem(ToyConstraint):
    def evaluate(self, theta, weights, need_grad=True, split=False):
        ev = super().evaluate(theta, weights, need_grad)
        if abs(theta[0]) > 5.0:
            ev = LossEvaluation(
                bundle=ev.bundle, objective=float("nan"), grad=ev.grad,
                boundary_error=ev.boundary_error, interior_error=np.nan,
            )
        return ev


def test_divergence_reports_epoch():
    # force a blow-up by ascending instead of descending (negative problem)
    prob = _ExplodingProblem()
    with pytest.raises(DivergedError) as err:
        al_minimize(prob, np.array([1e3]), TOY_CRITERIA, lr=0.1)
    assert err.value.epoch >= 0


# ------------------------------------------------------------ fixed drivers

def test_train_fixed_rejects_zero_epochs():
    with pytest.raises(ValueError):
        train_fixed(ToyConstraint(), np.array([0.0]), "penalty", 0, lr=0.1)


def test_train_fixed_history_length():
    _, _, history = train_fixed(ToyConstraint(), np.array([0.0]), "penalty", 50,
                                lr=0.1, params=MethodParams(beta=10.0))
    assert len(history) == 50


def test_penalty_drives_toward_constrained_optimum():
    # with beta = 100 the penalty minimizer sits near theta = beta/(1+beta)
    theta, _, _ = train_fixed(ToyConstraint(), np.array([0.0]), "penalty", 3000,
                              lr=0.05, params=MethodParams(beta=100.0))
    assert theta[0] == pytest.approx(100.0 / 101.0, abs=1e-3)


def test_sa_fixed_point_zero_residuals():
    class Satisfied(ToyConstraint):
        def evaluate(self, theta, weights, need_grad=True, split=False):
            ev = super().evaluate(theta, weights, need_grad)
            bundle = make_bundle(ev.bundle.interior_loss, r_d=[0.0], a_d=[1.0])
            return LossEvaluation(bundle=bundle, objective=ev.objective,
                                  grad=np.zeros(1), boundary_error=0.0,
                                  interior_error=np.nan)

    _, state, _ = train_fixed(Satisfied(), np.array([1.0]), "sa", 20, lr=0.1)
    assert np.all(state.beta_d == 1.0)


def test_minmax_multiplier_moves_with_signed_residual():
    theta, state, _ = train_fixed(ToyConstraint(), np.array([0.0]), "minmax", 200,
                                  lr=0.05, params=MethodParams(lr_lambda=0.01))
    # residual starts negative, so lambda must have moved negative
    assert state.lambda_d[0, 0] < 0.0


def test_lra_balances_terms_on_toy():
    theta, state, history = train_fixed(
        ToyConstraint(), np.array([0.0]), "lra", 500, lr=0.05,
        params=MethodParams(alpha=0.9, beta0=1.0),
    )
    assert np.isfinite(history.objective[-1])
    assert state.beta_max() > 0.0
