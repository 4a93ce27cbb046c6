"""
JDCEV Bond Engine - Model Core

모든 모듈이 사용하는 폐형식 스칼라 함수
- 변동성 sigma(t,S) = a(t) S^beta
- 부도강도 lambda(t,S) = b(t) + c sigma(t,S)^2
- 적분 부도강도 (정확한 다항식 원시함수)
- Vasicek 무위험 할인채 (해석해)

numpy 배열도 그대로 받는다 (브로드캐스팅).
"""

import math

import numpy as np

from app.core.errors import ModelDomainError
from app.models.params import EquityParams, RateParams

# kappa 가 이보다 작으면 급수 극한 사용
KAPPA_SERIES_THRESHOLD = 1e-8


def _check_price(S) -> None:
    if np.any(np.asarray(S) <= 0.0):
        raise ModelDomainError("stock price S must be > 0")


def volatility(t, S, p: EquityParams):
    """sigma(t,S) = a(t) S^beta."""
    _check_price(S)
    return p.a(t) * np.power(S, p.beta)


def hazard(t, S, p: EquityParams):
    """lambda(t,S) = b(t) + c a(t)^2 S^(2 beta)."""
    _check_price(S)
    a = p.a(t)
    return p.b(t) + p.c * a * a * np.power(S, 2.0 * p.beta)


def integrated_hazard(t1, t2, S, p: EquityParams):
    """
    S 고정 시 lambda 의 시간 적분

    b(u) 와 c a(u)^2 가 u 의 2차 이하 다항식이므로 원시함수로 정확히 계산.

    Args:
        t1, t2: 적분 구간 (t1 <= t2)
        S: 주가 (> 0)
        p: 주식 파라미터

    Returns:
        int_{t1}^{t2} lambda(u, S) du
    """
    _check_price(S)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t2 < t1):
        raise ModelDomainError("integrated_hazard requires t1 <= t2")

    h = t2 - t1
    s1 = t2 + t1
    s2 = t2 * t2 + t1 * t2 + t1 * t1

    base = p.b1 * 0.5 * h * s1 + p.b2 * h
    a_sq = p.a1 * p.a1 * h * s2 / 3.0 + p.a1 * p.a2 * h * s1 + p.a2 * p.a2 * h
    result = base + p.c * a_sq * np.power(S, 2.0 * p.beta)
    return float(result) if np.ndim(result) == 0 else result


def vasicek_b(tau, kappa: float):
    """B(tau) = (1 - e^{-kappa tau}) / kappa, kappa -> 0 에서 tau."""
    if kappa < KAPPA_SERIES_THRESHOLD:
        return tau - 0.5 * kappa * tau * tau
    return -np.expm1(-kappa * tau) / kappa


def vasicek_zcb(r, tau, p: RateParams):
    """
    Vasicek 무위험 할인채 가격 exp(A(tau) - B(tau) r)

    A = (theta - delta^2/(2 kappa^2))(B - tau) - delta^2 B^2 / (4 kappa)
    kappa -> 0 극한은 exp(-r tau + delta^2 tau^3 / 6).
    """
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0.0):
        raise ModelDomainError("vasicek_zcb requires tau >= 0")

    k, th, d = p.kappa, p.theta, p.delta
    if k < KAPPA_SERIES_THRESHOLD:
        log_p = -np.asarray(r) * tau_arr + d * d * tau_arr**3 / 6.0
    else:
        B = vasicek_b(tau_arr, k)
        A = (th - d * d / (2.0 * k * k)) * (B - tau_arr) - d * d * B * B / (4.0 * k)
        log_p = A - B * np.asarray(r)
    price = np.exp(log_p)
    return float(price) if np.ndim(price) == 0 else price


def vasicek_discounted_rate(r, tau, p: RateParams):
    """
    E[exp(-int_0^tau r_u du) r_tau | r_0 = r] = -dP/dtau = P (B' r - A')

    B' = e^{-kappa tau}
    A' = (theta - delta^2/(2 kappa^2))(e^{-kappa tau} - 1) - delta^2 B e^{-kappa tau} / (2 kappa)
    kappa -> 0 극한은 B' = 1, A' = delta^2 tau^2 / 2.
    """
    tau_arr = np.asarray(tau, dtype=float)
    k, th, d = p.kappa, p.theta, p.delta
    zcb = vasicek_zcb(r, tau_arr, p)
    if k < KAPPA_SERIES_THRESHOLD:
        b_dot = np.ones_like(tau_arr)
        a_dot = 0.5 * d * d * tau_arr**2
    else:
        b_dot = np.exp(-k * tau_arr)
        B = vasicek_b(tau_arr, k)
        a_dot = (th - d * d / (2.0 * k * k)) * np.expm1(-k * tau_arr) - d * d * B * b_dot / (2.0 * k)
    value = zcb * (b_dot * np.asarray(r) - a_dot)
    return float(value) if np.ndim(value) == 0 else value


def rate_integral(t_lo, t_hi, y, kappa: float):
    """
    int_{t_lo}^{t_hi} e^{-kappa u} y du  (y = r e^{kappa t} 좌표)

    kappa 가 매우 작으면 급수로 계산해 소거 오차를 피한다.
    """
    span = t_hi - t_lo
    if kappa < KAPPA_SERIES_THRESHOLD:
        # e^{-kappa u} ~ 1 - kappa u
        return y * (span - 0.5 * kappa * (t_hi * t_hi - t_lo * t_lo))
    return y * np.exp(-kappa * t_lo) * (-np.expm1(-kappa * span)) / kappa


def year_steps(maturity: float, steps_per_year: int) -> int:
    """연간 스텝 수 관례: N = round(steps_per_year * T), 최소 1."""
    return max(1, int(math.floor(steps_per_year * maturity + 0.5)))
