"""영역 변환 / 계수 / Fichera 분류 테스트."""

import math
from dataclasses import replace

import numpy as np
import pytest

from app.core.errors import InconclusiveClassificationError, OutOfDomainError
from app.models.params import MarketState, RateParams, TruncationConfig
from app.services.model.core import hazard, integrated_hazard, rate_integral, vasicek_zcb
from app.services.pde import localization
from app.services.pde.localization import (
    BoundaryData,
    Face,
    FaceClass,
    ProblemKind,
    build_domain,
    default_truncation,
    diffusion,
    diffusion_divergence,
    dirichlet_data,
    drift,
    fichera_classify,
    from_computational,
    grad_div_velocity,
    initial_data,
    reaction,
    to_computational,
    velocity,
    velocity_jacobian,
)

SPATIAL_FACES = {Face.GAMMA1_MINUS, Face.GAMMA1_PLUS, Face.GAMMA2_MINUS, Face.GAMMA2_PLUS}


def _random_points(d, n=1000, seed=7):
    rng = np.random.default_rng(seed)
    margin = 1e-3
    x1 = rng.uniform(margin, d.x1_max - margin, n)
    x2 = rng.uniform(margin, d.x2_max - margin, n)
    tau = rng.uniform(0.0, d.T1, n)
    return tau, x1, x2


def test_default_truncation_values():
    market = MarketState(S0=1.0, r0=0.01, rho=0.0)
    rate = RateParams(kappa=0.5, theta=0.02, delta=0.1)
    trunc = default_truncation(market, rate, 2.0)
    assert trunc.s_max == 10.0
    mean = 0.01 + 0.02 * (math.e - 1.0)
    sd = 0.1 * math.sqrt(math.e**2 - 1.0)
    assert trunc.y_half == pytest.approx(mean + 6.0 * sd)


def test_default_truncation_without_mean_reversion():
    market = MarketState(S0=1.0, r0=-0.02, rho=0.0)
    rate = RateParams(kappa=0.0, theta=0.05, delta=0.01)
    assert default_truncation(market, rate, 4.0).y_half == pytest.approx(0.02 + 6.0 * 0.01 * 2.0)


def test_default_truncation_floor_for_deterministic_rate():
    market = MarketState(S0=1.0, r0=0.03, rho=0.0)
    rate = RateParams(kappa=0.2, theta=0.01, delta=0.0)
    trunc = default_truncation(market, rate, 1.0)
    mean = 0.03 + 0.01 * math.expm1(0.2)
    image = 0.03 * math.exp(0.2)
    assert image > mean
    assert trunc.y_half == pytest.approx(image + 1e-3)


def test_default_truncation_covers_rate_distribution(ubs_config):
    m = ubs_config.model
    short = default_truncation(m.market, m.rate, 1.0).y_half
    long = default_truncation(m.market, m.rate, 10.0).y_half
    assert abs(m.market.r0) < short < long
    assert long == pytest.approx(0.57, abs=0.02)


def test_default_truncation_scales_with_spot():
    market = MarketState(S0=3.0, r0=0.0, rho=0.0)
    rate = RateParams(kappa=0.1, theta=0.02, delta=0.01)
    assert default_truncation(market, rate, 1.0).s_max == 30.0


def test_build_domain_geometry(ubs_domain):
    assert ubs_domain.s_min == pytest.approx(0.1)
    assert ubs_domain.x1_max == pytest.approx(9.9)
    assert ubs_domain.x2_max == pytest.approx(2.0 * ubs_domain.y_half)
    assert ubs_domain.T1 == 5.0


def test_build_domain_rejects_small_s_max(ubs_config):
    m = ubs_config.model
    market = MarketState(S0=2.0, r0=m.market.r0, rho=0.0)
    with pytest.raises(OutOfDomainError, match="s_max"):
        build_domain(m.equity, m.rate, market, 5.0, TruncationConfig(s_max=1.5))


def test_build_domain_rejects_rate_outside_window(ubs_config):
    m = ubs_config.model
    with pytest.raises(OutOfDomainError, match="y_half"):
        build_domain(m.equity, m.rate, m.market, 5.0, TruncationConfig(y_half=0.001))


def test_coordinate_round_trip(ubs_config, ubs_domain):
    market = ubs_config.model.market
    x1, x2 = to_computational(market.S0, market.r0, 1.5, ubs_domain)
    S, r = from_computational(x1, x2, 1.5, ubs_domain)
    assert S == pytest.approx(market.S0)
    assert r == pytest.approx(market.r0)


def test_spot_maps_inside_rectangle(ubs_config, ubs_domain):
    market = ubs_config.model.market
    x1, x2 = to_computational(market.S0, market.r0, 0.0, ubs_domain)
    assert 0.0 < x1 < ubs_domain.x1_max
    assert 0.0 < x2 < ubs_domain.x2_max


def test_out_of_domain_point(ubs_domain):
    with pytest.raises(OutOfDomainError):
        to_computational(50.0, 0.0, 0.0, ubs_domain)


def test_diffusion_is_symmetric_positive_semidefinite(jpm_domain):
    tau, x1, _ = _random_points(jpm_domain, 200)
    for t, x in zip(tau, x1):
        A = diffusion(t, x, jpm_domain)
        assert A[0, 1] == A[1, 0]
        assert np.all(np.linalg.eigvalsh(A) >= -1e-15)


def test_velocity_is_divergence_minus_drift(any_config, domain_for):
    d = domain_for(any_config)
    tau, x1, x2 = _random_points(d, 300)
    h = 1e-6
    for t in tau[:3]:
        # A 는 x1 에만 의존하므로 (Div A)_i = d A_i1 / d x1
        dA = (diffusion(t, x1 + h, d) - diffusion(t, x1 - h, d)) / (2.0 * h)
        div_A = dA[:, :, 0]

        time = d.T1 - t
        s = x1 + d.s_min
        r = (x2 - d.y_half) * math.exp(-d.rate.kappa * time)
        b1 = (r + hazard(time, s, d.equity)) * s
        b2 = np.full_like(s, d.rate.kappa * d.rate.theta * math.exp(d.rate.kappa * time))

        v = velocity(t, x1, x2, d)
        np.testing.assert_allclose(v[:, 0], div_A[:, 0] - b1, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(v[:, 1], div_A[:, 1] - b2, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(diffusion_divergence(t, x1, d), div_A, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(drift(t, x1, x2, d), np.column_stack([b1, b2]), rtol=1e-12, atol=1e-15)


def test_velocity_jacobian_matches_finite_differences(any_config, domain_for):
    d = domain_for(any_config)
    tau, x1, x2 = _random_points(d)
    h1, h2 = 1e-6, 1e-6
    for t in np.unique(np.round(tau[:5], 6)):
        L = velocity_jacobian(t, x1, x2, d)
        fd1 = (velocity(t, x1 + h1, x2, d) - velocity(t, x1 - h1, x2, d)) / (2.0 * h1)
        fd2 = (velocity(t, x1, x2 + h2, d) - velocity(t, x1, x2 - h2, d)) / (2.0 * h2)
        np.testing.assert_allclose(L[:, :, 0], fd1, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(L[:, :, 1], fd2, rtol=1e-5, atol=1e-8)


def test_grad_div_velocity_matches_finite_differences(any_config, domain_for):
    d = domain_for(any_config)
    tau, x1, x2 = _random_points(d)
    h = 1e-6

    def div_v(t, a, b):
        L = velocity_jacobian(t, a, b, d)
        return L[..., 0, 0] + L[..., 1, 1]

    t = tau[0]
    g = grad_div_velocity(t, x1, x2, d)
    fd1 = (div_v(t, x1 + h, x2) - div_v(t, x1 - h, x2)) / (2.0 * h)
    fd2 = (div_v(t, x1, x2 + h) - div_v(t, x1, x2 - h)) / (2.0 * h)
    np.testing.assert_allclose(g[:, 0], fd1, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(g[:, 1], fd2, rtol=1e-5, atol=1e-8)


def test_reaction_contains_rate_and_hazard(ubs_domain):
    d = ubs_domain
    x2 = d.y_half + 0.02
    l_val = reaction(d.T1, 0.9, x2, d)
    eq = d.equity
    expected = 0.02 + eq.b(0.0) + eq.c * eq.a(0.0) ** 2
    assert l_val == pytest.approx(expected)


def test_initial_data(ubs_domain):
    x1 = np.array([0.5, 1.0])
    x2 = np.array([ubs_domain.y_half, ubs_domain.y_half + 0.1])
    np.testing.assert_allclose(initial_data(ProblemKind.U1, x1, x2, ubs_domain), [1.0, 1.0])
    expected = math.exp(-ubs_domain.rate.kappa * ubs_domain.T1) * np.array([0.0, 0.1])
    np.testing.assert_allclose(initial_data(ProblemKind.U2, x1, x2, ubs_domain), expected, atol=1e-15)


@pytest.mark.parametrize("kind", list(ProblemKind))
def test_dirichlet_data_starts_at_initial_data(kind, ubs_domain):
    x1 = np.array([0.0, 3.0, ubs_domain.x1_max])
    x2 = np.array([0.0, ubs_domain.y_half, ubs_domain.x2_max])
    np.testing.assert_allclose(
        dirichlet_data(kind, 0.0, x1, x2, ubs_domain), initial_data(kind, x1, x2, ubs_domain)
    )


def test_dirichlet_data_discounts_with_positive_rate(ubs_domain):
    x2 = ubs_domain.y_half + 0.05
    value = dirichlet_data(ProblemKind.U1, 1.0, 2.0, x2, ubs_domain)
    assert 0.0 < value < 1.0


def test_dirichlet_data_is_vasicek_price_without_hazard(ubs_config, domain_for):
    d = domain_for(ubs_config.without_hazard())
    x2 = np.linspace(0.0, d.x2_max, 7)
    tau = 2.5
    r = (x2 - d.y_half) * math.exp(-d.rate.kappa * (d.T1 - tau))
    expected = vasicek_zcb(r, tau, d.rate)
    for x1 in (0.0, 4.0, d.x1_max):
        np.testing.assert_allclose(dirichlet_data(ProblemKind.U1, tau, x1, x2, d), expected, rtol=1e-13)


def test_dirichlet_data_u2_is_minus_price_derivative(jpm_config, domain_for):
    d = domain_for(jpm_config.without_hazard())
    x2 = np.linspace(0.0, d.x2_max, 5)
    tau, h = 1.7, 1e-5
    r = (x2 - d.y_half) * math.exp(-d.rate.kappa * (d.T1 - tau))
    dp = (vasicek_zcb(r, tau + h, d.rate) - vasicek_zcb(r, tau - h, d.rate)) / (2.0 * h)
    np.testing.assert_allclose(dirichlet_data(ProblemKind.U2, tau, 0.0, x2, d), -dp, rtol=1e-7, atol=1e-10)


def test_dirichlet_data_applies_frozen_price_survival(ubs_domain):
    d = ubs_domain
    tau, x1 = 2.0, 0.0
    x2 = np.array([0.1, d.y_half, d.x2_max - 0.1])
    without_hazard = dirichlet_data(ProblemKind.U1, tau, x1, x2, replace(d, equity=d.equity.without_hazard()))
    survival = math.exp(-integrated_hazard(d.T1 - tau, d.T1, x1 + d.s_min, d.equity))
    np.testing.assert_allclose(dirichlet_data(ProblemKind.U1, tau, x1, x2, d), survival * without_hazard, rtol=1e-13)


def test_frozen_boundary_data_keeps_rate_fixed(ubs_domain):
    d = replace(ubs_domain, boundary=BoundaryData.FROZEN)
    tau, x1 = 1.5, 0.0
    x2 = np.array([0.1, d.y_half + 0.05])
    y = x2 - d.y_half
    t_lo = d.T1 - tau
    expected = np.exp(
        -(rate_integral(t_lo, d.T1, y, d.rate.kappa) + integrated_hazard(t_lo, d.T1, x1 + d.s_min, d.equity))
    )
    np.testing.assert_allclose(dirichlet_data(ProblemKind.U1, tau, x1, x2, d), expected, rtol=1e-13)


def test_build_domain_boundary_option(ubs_config):
    m = ubs_config.model
    assert build_domain(m.equity, m.rate, m.market, 5.0).boundary is BoundaryData.AFFINE
    d = build_domain(m.equity, m.rate, m.market, 5.0, boundary="frozen")
    assert d.boundary is BoundaryData.FROZEN


def test_fichera_classification_regression(any_config, domain_for):
    result = fichera_classify(domain_for(any_config))
    assert result.sigma1 == SPATIAL_FACES
    assert result.sigma2 == {Face.GAMMA0_PLUS}
    assert result.faces[Face.GAMMA0_MINUS] is FaceClass.SIGMA0
    assert not result.needs_data(Face.GAMMA0_MINUS)
    assert result.needs_data(Face.GAMMA0_PLUS)


def test_fichera_degenerate_rate_direction(ubs_config):
    m = ubs_config.model
    rate = RateParams(kappa=0.1, theta=0.05, delta=0.0)
    market = MarketState(S0=1.0, r0=0.01, rho=0.0)
    d = build_domain(m.equity, rate, market, 1.0, TruncationConfig(y_half=0.5))
    result = fichera_classify(d)
    assert result.faces[Face.GAMMA2_MINUS] is FaceClass.SIGMA0
    assert result.faces[Face.GAMMA2_PLUS] is FaceClass.SIGMA2
    assert Face.GAMMA1_MINUS in result.sigma1


def test_fichera_inconclusive_sign_change(monkeypatch, ubs_domain):
    def fake(t, x1, x2, d):
        return np.zeros((3, 3)), np.array([1.0, x2 - 0.5 * d.x2_max, 0.0]), np.zeros(3)

    monkeypatch.setattr(localization, "_oleinik_coefficients", fake)
    with pytest.raises(InconclusiveClassificationError, match="gamma1-"):
        fichera_classify(ubs_domain)
