import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridgd.hybrid_core import (
    BlockPartition,
    ContractViolation,
    HybridTime,
    SystemState,
    TimerPolicy,
    agreed_snapshot,
    flow_advance,
    jump,
    validate_hybrid_domain,
)


def euler(x0, g, duration, steps):
    # Brute-force oracle for xdot = -g.
    x = [float(v) for v in x0]
    h = duration / steps
    for _ in range(steps):
        x = [xi - h * gi for xi, gi in zip(x, g)]
    return np.array(x)


def test_hybrid_time_rejects_negative():
    with pytest.raises(ValueError):
        HybridTime(-1.0, 0)
    with pytest.raises(ValueError):
        HybridTime(0.0, -1)
    assert HybridTime(0.1, 0) < HybridTime(0.1, 1) < HybridTime(0.2, 0)


def test_block_partition():
    p = BlockPartition((2, 1, 3))
    assert p.n == 6 and p.N == 3
    assert p.offsets == (0, 2, 3, 6)
    assert p.block(2) == slice(3, 6)
    assert BlockPartition.scalar(4).is_scalar
    with pytest.raises(ValueError):
        BlockPartition((1, 0))
    with pytest.raises(ValueError):
        BlockPartition(())


def test_state_validation():
    with pytest.raises(ValueError):
        SystemState(np.zeros(2), np.zeros((2, 3)), 0.1)
    with pytest.raises(ValueError):
        SystemState(np.zeros(2), np.zeros((2, 2)), -0.1)
    s = SystemState.agreeing([1.0, 2.0], 3, 0.2)
    assert s.eta.shape == (3, 2) and s.eta.strides[0] == 0
    assert not s.x.flags.writeable
    np.testing.assert_array_equal(agreed_snapshot(s.eta), [1.0, 2.0])
    assert agreed_snapshot(np.array([[0.0, 1.0], [0.0, 2.0]])) is None
    np.testing.assert_array_equal(agreed_snapshot(np.array([[3.0, 1.0], [3.0, 1.0]])), [3.0, 1.0])


def test_flow_example_against_euler():
    s = SystemState.agreeing([0.0, 0.0], 2, 0.2)
    g = np.array([1.0, 1.0])  # grad L(0) for Q = diag(2,4), b = (1,1)
    out = flow_advance(s, g, 0.1)
    np.testing.assert_allclose(out.x, [-0.1, -0.1], rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.x, euler([0.0, 0.0], g, 0.1, 100_000), atol=1e-12)
    assert out.eta is s.eta
    assert out.tau == pytest.approx(0.1, abs=1e-15)


def test_flow_zero_gradient_moves_only_timer():
    s = SystemState.agreeing([0.3, -0.7], 2, 0.2)
    out = flow_advance(s, np.zeros(2), 0.05)
    np.testing.assert_array_equal(out.x, s.x)
    assert out.tau == pytest.approx(0.15)


def test_flow_skewed_timer_reaches_zero_at_double_interval():
    s = SystemState.agreeing([0.0], 1, 0.2)
    out = flow_advance(s, np.array([1.0]), 0.4, kappa=0.5)
    assert out.tau == 0.0
    # Cross-check against simulating the skewed clock in small steps.
    tau, t = 0.2, 0.0
    while tau > 1e-12:
        tau -= 1e-4 * 0.5
        t += 1e-4
    assert t == pytest.approx(0.4, abs=2e-4)


def test_flow_errors():
    s = SystemState.agreeing([0.0, 0.0], 2, 0.2)
    with pytest.raises(ContractViolation):
        flow_advance(s, np.ones(2), 0.3)
    with pytest.raises(ValueError):
        flow_advance(s, np.array([np.nan, 0.0]), 0.1)
    with pytest.raises(ContractViolation):
        flow_advance(s, np.ones(2), -0.1)


def test_jump_example():
    s = SystemState(np.array([-0.1, -0.1]), np.zeros((2, 2)), 0.0)
    pol = TimerPolicy(0.04, 0.2)
    out = jump(s, pol)
    np.testing.assert_array_equal(out.x, [-0.1, -0.1])
    np.testing.assert_array_equal(out.eta, [[-0.1, -0.1], [-0.1, -0.1]])
    assert out.tau == 0.2


def test_jump_fixed_point_and_precondition():
    s = SystemState.agreeing([0.5, 0.25], 3, 0.0)
    out = jump(s, TimerPolicy(0.1, 0.3, "fixed_min"))
    np.testing.assert_array_equal(out.x, s.x)
    np.testing.assert_array_equal(out.eta, s.eta)
    assert out.tau == 0.1
    with pytest.raises(ContractViolation):
        jump(s.with_tau(1e-6), TimerPolicy(0.1, 0.3))
    jump(s.with_tau(1e-13), TimerPolicy(0.1, 0.3))


def test_uniform_resets_deterministic():
    pol = TimerPolicy(0.05, 0.25, "uniform_random", seed=11)
    rng1, rng2 = pol.make_rng(), pol.make_rng()
    s1 = [pol.draw_reset(rng1) for _ in range(50)]
    s2 = [pol.draw_reset(rng2) for _ in range(50)]
    assert s1 == s2
    assert all(0.05 <= v <= 0.25 for v in s1)


def test_policy_validation():
    with pytest.raises(ValueError):
        TimerPolicy(0.3, 0.2)
    with pytest.raises(ValueError):
        TimerPolicy(0.0, 0.2)
    with pytest.raises(ValueError):
        TimerPolicy(0.1, 0.2, "uniform_random")
    with pytest.raises(ValueError):
        TimerPolicy(0.1, 0.2, "sometimes")
    with pytest.raises(ValueError):
        TimerPolicy(0.1, 0.2, kappa=1.0)
    with pytest.raises(ValueError):
        TimerPolicy(0.1, 0.2, theta_min=-0.2)
    with pytest.raises(ValueError):
        TimerPolicy(0.1, 0.2, "fixed_sequence", sequence=(0.15, 0.5))
    pol = TimerPolicy(0.1, 0.2, "fixed_sequence", sequence=(0.15, 0.12))
    assert [pol.draw_reset(None, k) for k in range(4)] == [0.15, 0.12, 0.15, 0.12]
    assert TimerPolicy(0.1, 0.2, kappa=0.5).interval_max == pytest.approx(0.4)
    assert pickle.loads(pickle.dumps(pol)) == pol


class _FakeTraj:
    def __init__(self, jump_times, times):
        self.jump_times = jump_times
        self.times = times


def test_validate_domain_detects_problems():
    pol = TimerPolicy(0.1, 0.2)
    good = _FakeTraj([0.2, 0.4], [HybridTime(0, 0), HybridTime(0.2, 0), HybridTime(0.2, 1), HybridTime(0.4, 1), HybridTime(0.4, 2)])
    assert validate_hybrid_domain(good, pol) == []
    assert validate_hybrid_domain(_FakeTraj([], [HybridTime(0, 0)]), pol)
    assert validate_hybrid_domain(_FakeTraj([0.2, 0.25], good.times), pol)
    assert validate_hybrid_domain(_FakeTraj([0.3], good.times), pol)
    bad_times = [HybridTime(0, 0), HybridTime(0.2, 0), HybridTime(0.25, 1)]
    assert validate_hybrid_domain(_FakeTraj([0.2], bad_times), pol)
    skip = [HybridTime(0, 0), HybridTime(0.2, 2)]
    assert validate_hybrid_domain(_FakeTraj([0.2], skip), pol)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    x=st.lists(finite, min_size=1, max_size=5),
    a=st.floats(0, 0.1),
    b=st.floats(0, 0.1),
    kappa=st.floats(-0.5, 0.5),
)
def test_flow_splits_compose(x, a, b, kappa):
    n = len(x)
    g = np.linspace(-2, 3, n)
    s = SystemState.agreeing(x, 2, 1.0)
    once = flow_advance(s, g, a + b, kappa)
    twice = flow_advance(flow_advance(s, g, a, kappa), g, b, kappa)
    np.testing.assert_allclose(twice.x, once.x, rtol=1e-12, atol=1e-12)
    assert twice.tau == pytest.approx(once.tau, abs=1e-12)
    np.testing.assert_array_equal(twice.eta, s.eta)


@settings(max_examples=60, deadline=None)
@given(lo=st.floats(0.01, 1.0), width=st.floats(0, 1.0), shift=st.floats(0, 0.5), seed=st.integers(0, 2**31))
def test_reset_draws_stay_in_interval(lo, width, shift, seed):
    pol = TimerPolicy(lo, lo + width, "uniform_random", seed=seed, theta_min=-0.5 * lo, theta_max=shift)
    rng = pol.make_rng()
    for _ in range(20):
        v = pol.draw_reset(rng)
        assert pol.reset_low <= v <= pol.reset_high
