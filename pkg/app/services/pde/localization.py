"""
JDCEV Bond Engine - Localization

유계 영역으로의 변환과 IBVP 계수
- y = r e^{kappa t}, 영역 절단, 이동 x1 = S - 1/s_max, x2 = y + y_half
- 시간 반전 tau = T1 - t
- 확산 행렬 A, 속도장 v, 반응항 l, 초기값 g, Dirichlet 값 f
- 속도장의 해석적 도함수 (grad v, grad div v)
- Fichera 경계 분류

모든 계수 함수는 x1, x2 에 대해 numpy 브로드캐스팅을 지원한다.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Set

import numpy as np

from app.core.errors import InconclusiveClassificationError, OutOfDomainError
from app.models.params import EquityParams, MarketState, RateParams, TruncationConfig
from app.services.model.core import (
    integrated_hazard,
    rate_integral,
    vasicek_discounted_rate,
    vasicek_zcb,
)

logger = logging.getLogger(__name__)

# 닫힌 사각형 판정 허용오차
BOUNDARY_TOL = 1e-12
# Fichera 영(0) 판정 허용오차
FICHERA_TOL = 1e-12


class ProblemKind(str, Enum):
    """만기 조건 h: U1 은 h = 1, U2 는 h = e^{-kappa T1} y."""

    U1 = "u1"
    U2 = "u2"


class BoundaryData(str, Enum):
    """
    Gamma1- Dirichlet 값의 구성 방식

    AFFINE: 경계의 주가를 고정하고 금리는 Vasicek 해석해로 기대값을 취한다.
    FROZEN: 금리까지 경계점의 y 로 고정해 적분한다 (비교용).
    """

    AFFINE = "affine"
    FROZEN = "frozen"


@dataclass(frozen=True)
class TransformedDomain:
    """
    변환된 계산 영역 Omega = (0, x1_max) x (0, x2_max) 와 만기 T1

    기하(s_max, y_half)는 만기와 무관하므로 같은 채권의 모든 풀이가 공유한다.
    """

    equity: EquityParams
    rate: RateParams
    s_max: float
    y_half: float
    T1: float
    rho: float = 0.0
    boundary: BoundaryData = BoundaryData.AFFINE

    @property
    def s_min(self) -> float:
        return 1.0 / self.s_max

    @property
    def x1_max(self) -> float:
        return self.s_max - 1.0 / self.s_max

    @property
    def x2_max(self) -> float:
        return 2.0 * self.y_half

    @property
    def area(self) -> float:
        return self.x1_max * self.x2_max

    def with_maturity(self, T1: float) -> "TransformedDomain":
        return replace(self, T1=T1)


def default_truncation(
    market: MarketState, rate: RateParams, horizon: float
) -> TruncationConfig:
    """
    기본 절단값

    s_max = 10 max(1, S0)
    y_half = max(|r0| e^{kappa T}, |m_T|) + max(6 sd_T, 1e-3)
    m_T, sd_T 는 y_T = r_T e^{kappa T} 의 평균과 표준편차:
    m_T = r0 + theta (e^{kappa T} - 1), sd_T = delta sqrt((e^{2 kappa T} - 1) / (2 kappa)) (kappa = 0 이면 delta sqrt(T)).
    """
    s_max = 10.0 * max(1.0, market.S0)
    k = rate.kappa
    if k > 0.0:
        mean = market.r0 + rate.theta * math.expm1(k * horizon)
        sd = rate.delta * math.sqrt(math.expm1(2.0 * k * horizon) / (2.0 * k))
    else:
        mean = market.r0
        sd = rate.delta * math.sqrt(horizon)
    y_half = max(abs(market.r0) * math.exp(k * horizon), abs(mean)) + max(6.0 * sd, 1e-3)
    return TruncationConfig(s_max=s_max, y_half=y_half)


def build_domain(
    equity: EquityParams,
    rate: RateParams,
    market: MarketState,
    horizon: float,
    truncation: Optional[TruncationConfig] = None,
    T1: Optional[float] = None,
    boundary: BoundaryData = BoundaryData.AFFINE,
) -> TransformedDomain:
    """
    계산 영역 생성

    Args:
        horizon: 채권 만기 T (기본 절단값과 r0 영상 검사에 사용)
        truncation: 지정하지 않은 값은 기본값으로 채움
        T1: 풀이 만기 (기본값 horizon)
        boundary: Gamma1- Dirichlet 값 구성 방식

    Raises:
        OutOfDomainError: s_max <= max(1, S0) 이거나 |r0| e^{kappa T} >= y_half
    """
    defaults = default_truncation(market, rate, horizon)
    s_max = defaults.s_max
    y_half = defaults.y_half
    if truncation is not None:
        s_max = truncation.s_max if truncation.s_max is not None else s_max
        y_half = truncation.y_half if truncation.y_half is not None else y_half

    if s_max <= max(1.0, market.S0):
        raise OutOfDomainError(f"s_max={s_max} must exceed max(1, S0={market.S0})")
    r_image = abs(market.r0) * math.exp(rate.kappa * horizon)
    if r_image >= y_half:
        raise OutOfDomainError(
            f"y-image of r0 ({r_image:.6g}) leaves (-y_half, y_half) with y_half={y_half:.6g}"
        )
    return TransformedDomain(
        equity=equity, rate=rate, s_max=s_max, y_half=y_half,
        T1=horizon if T1 is None else T1, rho=market.rho, boundary=BoundaryData(boundary),
    )


# ============================================================
# 좌표 변환
# ============================================================

def to_computational(S, r, t, d: TransformedDomain):
    """(S, r, t) -> (x1, x2). 닫힌 사각형 밖이면 OutOfDomainError."""
    x1 = np.asarray(S, dtype=float) - d.s_min
    x2 = np.asarray(r, dtype=float) * math.exp(d.rate.kappa * t) + d.y_half
    if (
        np.any(x1 < -BOUNDARY_TOL) or np.any(x1 > d.x1_max + BOUNDARY_TOL)
        or np.any(x2 < -BOUNDARY_TOL) or np.any(x2 > d.x2_max + BOUNDARY_TOL)
    ):
        raise OutOfDomainError(f"point (S={S}, r={r}, t={t}) outside the computational rectangle")
    if x1.ndim == 0:
        return float(x1), float(x2)
    return x1, x2


def from_computational(x1, x2, t, d: TransformedDomain):
    """(x1, x2) -> (S, r)."""
    S = np.asarray(x1, dtype=float) + d.s_min
    r = (np.asarray(x2, dtype=float) - d.y_half) * math.exp(-d.rate.kappa * t)
    if S.ndim == 0:
        return float(S), float(r)
    return S, r


# ============================================================
# IBVP 계수 (tau = T1 - t)
# ============================================================

def _price(x1, d: TransformedDomain):
    return np.asarray(x1, dtype=float) + d.s_min


def diffusion(tau, x1, d: TransformedDomain):
    """
    확산 행렬 A, shape (..., 2, 2)

    A11 = 1/2 a^2 s^{2beta+2}, A12 = 1/2 rho delta a s^{beta+1} e^{kappa t}, A22 = 1/2 delta^2 e^{2 kappa t}
    """
    t = d.T1 - tau
    s = _price(x1, d)
    eq, rt = d.equity, d.rate
    a = eq.a(t)
    E = math.exp(rt.kappa * t)
    rho = d.rho

    A = np.empty(s.shape + (2, 2))
    A[..., 0, 0] = 0.5 * a * a * s ** (2.0 * eq.beta + 2.0)
    A[..., 0, 1] = 0.5 * rho * rt.delta * a * s ** (eq.beta + 1.0) * E
    A[..., 1, 0] = A[..., 0, 1]
    A[..., 1, 1] = 0.5 * rt.delta * rt.delta * E * E
    return A


def diffusion_divergence(tau, x1, d: TransformedDomain):
    """(Div A)_i = sum_j d_j A_ij."""
    t = d.T1 - tau
    s = _price(x1, d)
    eq, rt = d.equity, d.rate
    a = eq.a(t)
    E = math.exp(rt.kappa * t)
    out = np.empty(s.shape + (2,))
    out[..., 0] = 0.5 * a * a * (2.0 * eq.beta + 2.0) * s ** (2.0 * eq.beta + 1.0)
    out[..., 1] = 0.5 * d.rho * rt.delta * a * (eq.beta + 1.0) * s**eq.beta * E
    return out


def drift(tau, x1, x2, d: TransformedDomain):
    """비발산형 연산자의 1차 계수 b = ((y e^{-kappa t} + lambda) s, kappa theta e^{kappa t})."""
    t = d.T1 - tau
    s = _price(x1, d)
    x2 = np.asarray(x2, dtype=float)
    rt = d.rate
    E = math.exp(rt.kappa * t)
    lam = _hazard_at(t, s, d.equity)
    s, x2 = np.broadcast_arrays(s, x2)
    out = np.empty(s.shape + (2,))
    out[..., 0] = ((x2 - d.y_half) / E + lam) * s
    out[..., 1] = rt.kappa * rt.theta * E
    return out


def velocity(tau, x1, x2, d: TransformedDomain):
    """
    발산형 대류장 v = Div A - b, shape (..., 2)

    v1 = 1/2 a^2 (2beta+2) s^{2beta+1} - (e^{-kappa t}(x2 - y_half) + lambda) s
    v2 = 1/2 rho delta a (beta+1) s^beta e^{kappa t} - kappa theta e^{kappa t}
    """
    t = d.T1 - tau
    s = _price(x1, d)
    x2 = np.asarray(x2, dtype=float)
    eq, rt = d.equity, d.rate
    a = eq.a(t)
    E = math.exp(rt.kappa * t)
    s2b = s ** (2.0 * eq.beta)
    lam = eq.b(t) + eq.c * a * a * s2b

    s, x2 = np.broadcast_arrays(s, x2)
    s2b = np.broadcast_to(s2b, s.shape)
    lam = np.broadcast_to(lam, s.shape)
    out = np.empty(s.shape + (2,))
    out[..., 0] = 0.5 * a * a * (2.0 * eq.beta + 2.0) * s2b * s - ((x2 - d.y_half) / E + lam) * s
    out[..., 1] = (0.5 * d.rho * rt.delta * a * (eq.beta + 1.0) * s**eq.beta - rt.kappa * rt.theta) * E
    return out


def velocity_jacobian(tau, x1, x2, d: TransformedDomain):
    """L = grad v, L[..., i, j] = d v_i / d x_j."""
    t = d.T1 - tau
    s = _price(x1, d)
    x2 = np.asarray(x2, dtype=float)
    eq, rt = d.equity, d.rate
    a = eq.a(t)
    E = math.exp(rt.kappa * t)
    beta = eq.beta
    s, x2 = np.broadcast_arrays(s, x2)

    L = np.zeros(s.shape + (2, 2))
    # v1 = (beta + 1 - c) a^2 s^{2beta+1} - (y/E + b) s
    L[..., 0, 0] = (beta + 1.0 - eq.c) * (2.0 * beta + 1.0) * a * a * s ** (2.0 * beta) - (
        (x2 - d.y_half) / E + eq.b(t)
    )
    L[..., 0, 1] = -s / E
    L[..., 1, 0] = 0.5 * d.rho * rt.delta * a * (beta + 1.0) * beta * s ** (beta - 1.0) * E
    return L


def grad_div_velocity(tau, x1, x2, d: TransformedDomain):
    """grad(Div v), shape (..., 2)."""
    t = d.T1 - tau
    s = _price(x1, d)
    x2 = np.asarray(x2, dtype=float)
    eq, rt = d.equity, d.rate
    a = eq.a(t)
    E = math.exp(rt.kappa * t)
    beta = eq.beta
    s, x2 = np.broadcast_arrays(s, x2)

    out = np.empty(s.shape + (2,))
    out[..., 0] = (beta + 1.0 - eq.c) * (2.0 * beta + 1.0) * (2.0 * beta) * a * a * s ** (2.0 * beta - 1.0)
    out[..., 1] = -1.0 / E
    return out


def reaction(tau, x1, x2, d: TransformedDomain):
    """l = e^{-kappa t}(x2 - y_half) + lambda(t, s)."""
    t = d.T1 - tau
    s = _price(x1, d)
    E = math.exp(d.rate.kappa * t)
    return (np.asarray(x2, dtype=float) - d.y_half) / E + _hazard_at(t, s, d.equity)


def initial_data(kind: ProblemKind, x1, x2, d: TransformedDomain):
    """g = 1 (U1) 또는 e^{-kappa T1}(x2 - y_half) (U2)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if kind is ProblemKind.U1:
        return np.ones(np.broadcast_shapes(x1.shape, x2.shape))
    return np.broadcast_to(
        math.exp(-d.rate.kappa * d.T1) * (x2 - d.y_half),
        np.broadcast_shapes(x1.shape, x2.shape),
    ).copy()


def dirichlet_data(kind: ProblemKind, tau, x1, x2, d: TransformedDomain):
    """
    Dirichlet 경계값 f

    생존확률 exp(-int_{T1-tau}^{T1} lambda(u, s) du) 는 경계점의 주가를 고정해 계산한다.
    AFFINE: r = e^{-kappa (T1-tau)}(x2 - y_half) 에서 시작하는 Vasicek 기대값
        U1: P(r, tau),  U2: E[e^{-int r} r_tau] = P (B' r - A')
    FROZEN: 금리를 y 고정으로 적분, f = exp(-int e^{-kappa u} y du) g
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    t_lo = d.T1 - tau
    y = x2 - d.y_half
    survival = np.exp(-integrated_hazard(t_lo, d.T1, _price(x1, d), d.equity))
    shape = np.broadcast_shapes(x1.shape, x2.shape)

    if d.boundary is BoundaryData.FROZEN:
        rate_part = np.exp(-rate_integral(t_lo, d.T1, y, d.rate.kappa))
        return rate_part * survival * initial_data(kind, x1, x2, d)

    r = y * math.exp(-d.rate.kappa * t_lo)
    if kind is ProblemKind.U1:
        rate_part = vasicek_zcb(r, tau, d.rate)
    else:
        rate_part = vasicek_discounted_rate(r, tau, d.rate)
    return np.broadcast_to(rate_part * survival, shape).copy()


def _hazard_at(t, s, eq: EquityParams):
    a = eq.a(t)
    return eq.b(t) + eq.c * a * a * s ** (2.0 * eq.beta)


# ============================================================
# Fichera 경계 분류
# ============================================================

class Face(str, Enum):
    """(t, x1, x2) 상자의 여섯 면."""

    GAMMA0_MINUS = "gamma0-"
    GAMMA0_PLUS = "gamma0+"
    GAMMA1_MINUS = "gamma1-"
    GAMMA1_PLUS = "gamma1+"
    GAMMA2_MINUS = "gamma2-"
    GAMMA2_PLUS = "gamma2+"

    @property
    def axis(self) -> int:
        return int(self.value[5])

    @property
    def is_upper(self) -> bool:
        return self.value.endswith("+")

    @property
    def inward_normal(self) -> np.ndarray:
        m = np.zeros(3)
        m[self.axis] = -1.0 if self.is_upper else 1.0
        return m


class FaceClass(str, Enum):
    SIGMA0 = "sigma0"  # 퇴화, 데이터 불필요
    SIGMA1 = "sigma1"  # 비퇴화
    SIGMA2 = "sigma2"  # 퇴화지만 유입 (데이터 필요)


@dataclass(frozen=True)
class FicheraClassification:
    """면별 분류 결과."""

    faces: Dict[Face, FaceClass]

    def needs_data(self, face: Face) -> bool:
        return self.faces[face] in (FaceClass.SIGMA1, FaceClass.SIGMA2)

    @property
    def sigma1(self) -> Set[Face]:
        return {f for f, c in self.faces.items() if c is FaceClass.SIGMA1}

    @property
    def sigma2(self) -> Set[Face]:
        return {f for f, c in self.faces.items() if c is FaceClass.SIGMA2}

    def as_dict(self) -> Dict[str, str]:
        return {f.value: c.value for f, c in self.faces.items()}


def _gauss_on(lo: float, hi: float) -> np.ndarray:
    xi, _ = np.polynomial.legendre.leggauss(3)
    return lo + (xi + 1.0) * 0.5 * (hi - lo)


def fichera_classify(d: TransformedDomain, t: Optional[float] = None) -> FicheraClassification:
    """
    Fichera 이론에 따른 경계 분류 (3차원 (t, x1, x2) 연산자)

    Sigma0: m^T B m = 0 인 면, Sigma1: 나머지,
    Sigma2: Sigma0 중 sum_i (b_i - sum_j d_j b_ij) m_i < 0 인 면 (m 은 안쪽 법선).
    각 면의 3x3 Gauss 점에서 표본을 잡고, 어느 한 점이라도 비퇴화이면 Sigma1.

    Args:
        d: 계산 영역
        t: 주어지면 공간 면을 이 시각에서만 표본 추출

    Raises:
        InconclusiveClassificationError: 퇴화 면 위에서 Fichera 부호가 바뀌는 경우
    """
    ranges = [(0.0, d.T1), (0.0, d.x1_max), (0.0, d.x2_max)]
    faces: Dict[Face, FaceClass] = {}

    for face in Face:
        axis = face.axis
        fixed = ranges[axis][1] if face.is_upper else ranges[axis][0]
        coords: List[np.ndarray] = []
        for k in range(3):
            if k == axis:
                coords.append(np.array([fixed]))
            elif k == 0 and t is not None:
                coords.append(np.array([t]))
            else:
                coords.append(_gauss_on(*ranges[k]))
        tt, xx1, xx2 = (c.ravel() for c in np.meshgrid(*coords, indexing="ij"))

        m = face.inward_normal
        normal_diffusion = np.empty(tt.size)
        fichera = np.empty(tt.size)
        for i in range(tt.size):
            B, b, div_B = _oleinik_coefficients(tt[i], xx1[i], xx2[i], d)
            normal_diffusion[i] = m @ B @ m
            fichera[i] = (b - div_B) @ m

        if np.any(normal_diffusion > FICHERA_TOL):
            faces[face] = FaceClass.SIGMA1
        elif np.all(fichera < -FICHERA_TOL):
            faces[face] = FaceClass.SIGMA2
        elif np.all(fichera >= -FICHERA_TOL):
            faces[face] = FaceClass.SIGMA0
        else:
            raise InconclusiveClassificationError(
                f"Fichera sign changes across face {face.value} "
                f"(min={fichera.min():.3e}, max={fichera.max():.3e})"
            )

    result = FicheraClassification(faces=faces)
    logger.debug("Fichera classification: %s", result.as_dict())
    return result


def _oleinik_coefficients(t: float, x1: float, x2: float, d: TransformedDomain):
    """(t, x1, x2) 좌표의 B (3x3), b (3), 행별 발산 sum_j d_j b_ij."""
    tau = d.T1 - t
    A = diffusion(tau, x1, d)
    B = np.zeros((3, 3))
    B[1:, 1:] = A
    b = np.empty(3)
    b[0] = 1.0
    b[1:] = drift(tau, x1, x2, d)
    div_B = np.zeros(3)
    div_B[1:] = diffusion_divergence(tau, x1, d)
    return B, b, div_B
