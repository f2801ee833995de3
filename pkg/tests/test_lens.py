import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlens.lens import (LensChart, LensDomainError, field_scale_factor,
                        hyperbolic_forward, hyperbolic_inverse, lens_time,
                        physical_time, pushforward_field, symplectic_form,
                        time_dilation, trig_forward, trig_inverse)
from vlens.field import ElectricField, solve_field


def test_identity_at_t0():
    x = np.array([0.3, -1.2])
    v = np.array([0.9, 0.1])
    s, q, p = hyperbolic_forward(0.0, x, v)
    assert s == 0.0
    np.testing.assert_allclose(q, x)
    np.testing.assert_allclose(p, v)


def test_origin_collapses_shear():
    s, q, p = hyperbolic_forward(1.7, np.zeros(2), np.array([1.0, -2.0]))
    assert s == pytest.approx(np.tanh(1.7))
    np.testing.assert_allclose(q, 0.0)
    np.testing.assert_allclose(p, np.array([1.0, -2.0]) * np.cosh(1.7))


def test_round_trip_specific_point():
    t, x, v = 1.3, np.array([0.2, -0.7]), np.array([1.1, 0.4])
    s, q, p = hyperbolic_forward(t, x, v)
    t2, x2, v2 = hyperbolic_inverse(s, q, p)
    assert abs(t2 - t) < 1e-12
    np.testing.assert_allclose(x2, x, atol=1e-12)
    np.testing.assert_allclose(v2, v, atol=1e-12)


def test_inverse_rejects_boundary():
    with pytest.raises(LensDomainError):
        hyperbolic_inverse(1.0, np.zeros(2), np.zeros(2))
    with pytest.raises(LensDomainError):
        hyperbolic_inverse(-1.0, np.zeros(2), np.zeros(2))


def test_round_trip_random_sampling():
    rng = np.random.default_rng(0)
    t = rng.uniform(-5, 5, 10_000)
    x = rng.uniform(-2, 2, (10_000, 2))
    v = rng.uniform(-2, 2, (10_000, 2))
    s, q, p = hyperbolic_forward(t[:, None], x, v)
    t2, x2, v2 = hyperbolic_inverse(s, q, p)
    assert np.abs(t2[:, 0] - t).max() < 1e-11
    assert np.abs(x2 - x).max() < 1e-11
    assert np.abs(v2 - v).max() < 1e-11


@given(st.floats(-4.5, 4.5), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=200, deadline=None)
def test_round_trip_property(t, x1, x2, v1, v2):
    s, q, p = hyperbolic_forward(t, np.array([x1, x2]), np.array([v1, v2]))
    t2, x2b, v2b = hyperbolic_inverse(s, q, p)
    assert abs(t2 - t) < 1e-10
    assert np.abs(x2b - np.array([x1, x2])).max() < 1e-10
    assert np.abs(v2b - np.array([v1, v2])).max() < 1e-10


def test_trig_round_trip_and_domain():
    rng = np.random.default_rng(1)
    t = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05, 2000)
    x = rng.uniform(-2, 2, (2000, 2))
    v = rng.uniform(-2, 2, (2000, 2))
    s, q, p = trig_forward(t[:, None], x, v)
    t2, x2, v2 = trig_inverse(s, q, p)
    assert np.abs(t2[:, 0] - t).max() < 1e-11
    assert np.abs(x2 - x).max() < 1e-11
    assert np.abs(v2 - v).max() < 1e-11
    with pytest.raises(LensDomainError):
        trig_forward(np.pi / 2, np.zeros(2), np.zeros(2))


@pytest.mark.parametrize("flavor,t", [("hyperbolic", 0.7), ("trigonometric", 0.7),
                                      ("hyperbolic", -2.4)])
def test_jacobian_symplectic(flavor, t):
    chart = LensChart(flavor=flavor)
    J = chart.jacobian(t)
    omega = symplectic_form(2)
    assert abs(np.linalg.det(J) - 1.0) < 1e-13
    assert np.abs(J.T @ omega @ J - omega).max() < 1e-12


def test_jacobian_identity_at_zero_and_det_sweep():
    chart = LensChart()
    np.testing.assert_allclose(chart.jacobian(0.0), np.eye(4))
    for t in range(-3, 4):
        assert abs(np.linalg.det(chart.jacobian(float(t))) - 1.0) < 1e-13


def test_time_reparam_consistency():
    # T(tanh t) = t at strict tolerance on |t| <= 5; conditioning-aware toward 10
    t = np.linspace(-5, 5, 2001)
    assert np.abs(physical_time(lens_time(t)) - t).max() < 1e-12
    t = np.linspace(-10, 10, 2001)
    s = lens_time(t)
    # |arctanh(fl(tanh t)) - t| is bounded by the conditioning f(s) * ulp(s)
    tol = np.maximum(1e-12, 8.0 * time_dilation(s) * np.spacing(np.abs(s) + 1e-30))
    assert np.all(np.abs(physical_time(s) - t) < tol)


def test_time_dilation_is_derivative():
    s = np.linspace(-0.95, 0.95, 191)
    h = 1e-6
    fd = (physical_time(s + h) - physical_time(s - h)) / (2 * h)
    assert np.abs(fd - time_dilation(s)).max() < 1e-4


def test_field_scale_factor_identity():
    # e^-t * 2/(1+e^-2t) equals 1/cosh t, the d=2 amplitude factor
    t = np.linspace(-3, 3, 61)
    alt = np.exp(-t) * 2.0 / (1.0 + np.exp(-2.0 * t))
    np.testing.assert_allclose(alt, field_scale_factor(t, d=2), rtol=1e-14)


def test_pushforward_matches_direct_convolution():
    # field of a Gaussian blob, pushed to physical frame, against a direct
    # solve of the pushed-forward density on the image grid
    n, L, t = 96, 8.0, 0.9
    xs = np.linspace(-L, L, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    rho_lens = np.exp(-(X ** 2 + Y ** 2)) / np.pi
    e_lens = solve_field(rho_lens, L)
    pushed = pushforward_field(e_lens, t, d=2)

    ch = np.cosh(t)
    rho_phys = rho_lens / ch ** 2      # density transported by the chart
    e_phys = solve_field(rho_phys, L * ch)
    assert pushed.extent == pytest.approx(L * ch)
    scale = np.abs(e_phys.values).max()
    assert np.abs(pushed.values - e_phys.values).max() < 1e-6 * scale


def test_pushforward_at_points_extrapolation_error():
    n, L = 32, 4.0
    e_lens = ElectricField(np.zeros((n, n, 2)), L)
    from vlens.field import ExtrapolationError
    with pytest.raises(ExtrapolationError):
        pushforward_field(e_lens, 0.0, at_points=np.array([[10.0, 0.0]]))
    vals = pushforward_field(e_lens, 0.3, at_points=np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(vals, 0.0)
