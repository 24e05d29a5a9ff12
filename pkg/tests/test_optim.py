import numpy as np
import pytest

from levelpinn.optim import ADAM_DEFAULTS, AdamState, adam_step, gd_step


def test_defaults():
    st = AdamState.fresh(4, lr=1e-3)
    assert st.beta1 == 0.9 and st.beta2 == 0.999 and st.eps == 1e-8


def test_zero_grad_leaves_params():
    st = AdamState.fresh(5, lr=0.1)
    p = np.arange(5.0)
    out = adam_step(st, p, np.zeros(5))
    assert np.allclose(out, p)


def test_first_step_magnitude_near_lr():
    lr = 0.05
    st = AdamState.fresh(3, lr=lr)
    g = np.array([3.0, -0.5, 10.0])
    out = adam_step(st, np.zeros(3), g)
    mags = np.abs(out)
    assert np.all(mags >= 0.99 * lr) and np.all(mags <= lr)
    assert np.all(np.sign(out) == -np.sign(g))


def test_quadratic_descent_monotone():
    st = AdamState.fresh(1, lr=0.1)
    theta = np.array([1.0])
    prev = abs(theta[0])
    for _ in range(10):
        theta = adam_step(st, theta, theta.copy())
        assert abs(theta[0]) < prev
        prev = abs(theta[0])


def test_adam_deterministic():
    def run():
        st = AdamState.fresh(2, lr=0.01)
        p = np.array([1.0, -2.0])
        for k in range(20):
            p = adam_step(st, p, np.array([np.sin(k + 1.0), np.cos(k + 1.0)]))
        return p

    assert np.array_equal(run(), run())


def test_independent_states_do_not_interact():
    st1 = AdamState.fresh(1, lr=0.1)
    st2 = AdamState.fresh(1, lr=0.1)
    ref = AdamState.fresh(1, lr=0.1)
    p1 = np.array([1.0])
    p_ref = np.array([1.0])
    for k in range(8):
        g = np.array([0.5 * (k + 1)])
        p1 = adam_step(st1, p1, g)
        p_ref = adam_step(ref, p_ref, g)
        # interleave unrelated updates on the second state
        adam_step(st2, np.array([3.0]), np.array([-1.0 * k]))
    assert np.array_equal(p1, p_ref)


def test_nonfinite_grad_raises():
    st = AdamState.fresh(2, lr=0.1)
    with pytest.raises(FloatingPointError):
        adam_step(st, np.zeros(2), np.array([1.0, np.nan]))


def test_shape_mismatch_raises():
    st = AdamState.fresh(2, lr=0.1)
    with pytest.raises(ValueError):
        adam_step(st, np.zeros(2), np.zeros(3))


def test_gd_step_cases():
    assert np.allclose(gd_step(np.array([1.0]), np.array([2.0]), 0.5, "ascend"), 2.0)
    p = np.array([0.7])
    g = np.array([1.3])
    round_trip = gd_step(gd_step(p, g, 0.25, "descend"), g, 0.25, "ascend")
    assert np.allclose(round_trip, p)
    assert np.allclose(gd_step(p, np.zeros(1), 1.0), p)
    with pytest.raises(ValueError):
        gd_step(p, g, -1.0)
    with pytest.raises(ValueError):
        gd_step(p, g, 1.0, "sideways")
