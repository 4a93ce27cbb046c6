"""
JDCEV Bond Engine - Monte Carlo Oracle

PDE 결과 검증용 Monte Carlo 추정
- r: Ornstein-Uhlenbeck 정확 전이
- X = log S: Euler-Maruyama, W2 = rho W1 + sqrt(1 - rho^2) W_perp
- 경로별 할인 D(t) = exp(-int (r + lambda)), 적분은 시뮬레이션 격자 위 사다리꼴
- S 가 1/s_max 아래로 내려가면 그 시점부터 D = 0 (흡수)

경로는 고정 크기 블록으로 나누고 블록마다 (seed, block) 로 독립 난수열을 만든다.
블록 순서대로 합치므로 작업자 수와 관계없이 결과가 비트 단위로 같다.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.models.params import BondSpec, ModelParams
from app.models.run import McConfig, RunConfig
from app.services.model.core import KAPPA_SERIES_THRESHOLD, hazard
from app.services.pde.localization import build_domain

logger = logging.getLogger(__name__)

# 날짜가 시뮬레이션 격자에서 이보다 멀면 경고
SNAP_TOL = 1e-9
Z_95 = 1.96
# 흡수 하한이 없을 때 계수 평가용 최소 주가
PRICE_FLOOR = 1e-300


@dataclass(frozen=True)
class McEstimate:
    """표본 평균과 표준오차."""

    mean: float
    std_error: float
    n_paths: int = 0

    @property
    def ci95(self) -> Tuple[float, float]:
        return (self.mean - Z_95 * self.std_error, self.mean + Z_95 * self.std_error)

    def contains(self, value: float) -> bool:
        lo, hi = self.ci95
        return lo <= value <= hi

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "McEstimate":
        n = samples.shape[0]
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=float(samples.mean()), std_error=se, n_paths=n)

    def as_dict(self) -> Dict[str, object]:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "ci95": list(self.ci95),
            "n_paths": self.n_paths,
        }


@dataclass
class DiscountPaths:
    """요청 날짜별 경로 값: discount[p, k] = D(dates[k]), rate[p, k] = r(dates[k])."""

    dates: List[float]
    discount: np.ndarray
    rate: np.ndarray

    def column(self, date: float) -> int:
        for k, t in enumerate(self.dates):
            if abs(t - date) <= SNAP_TOL:
                return k
        raise KeyError(date)


@dataclass(frozen=True)
class SimulationGrid:
    """균등 시뮬레이션 격자, dt_eff = horizon / n_steps."""

    horizon: float
    n_steps: int

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @classmethod
    def build(cls, horizon: float, dt: float) -> "SimulationGrid":
        return cls(horizon=horizon, n_steps=max(1, int(round(horizon / dt))))

    def snap(self, date: float) -> int:
        """가장 가까운 격자점 인덱스."""
        k = int(round(date / self.dt))
        k = min(max(k, 0), self.n_steps)
        if abs(k * self.dt - date) > SNAP_TOL:
            logger.warning("date %.6g snapped to simulation grid point %.6g", date, k * self.dt)
        return k


def _block_sizes(n_paths: int, block_size: int) -> List[int]:
    full, rest = divmod(n_paths, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _normals(rng: np.random.Generator, size: int, antithetic: bool) -> Tuple[np.ndarray, np.ndarray]:
    """(Z1, Z_perp). 대칭 변수 사용 시 앞 절반을 부호 반전해 채운다."""
    if not antithetic:
        return rng.standard_normal(size), rng.standard_normal(size)
    half = (size + 1) // 2
    z1 = rng.standard_normal(half)
    zp = rng.standard_normal(half)
    return np.concatenate([z1, -z1])[:size], np.concatenate([zp, -zp])[:size]


def _simulate_block(
    block: int,
    size: int,
    grid: SimulationGrid,
    record: Sequence[int],
    params: ModelParams,
    mc: McConfig,
    s_min: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """한 블록의 경로를 시뮬레이션해 record 인덱스의 (D, r) 를 반환."""
    rng = _block_rng(mc.seed, block)
    rate, eq, market = params.rate, params.equity, params.market
    dt = grid.dt
    sqrt_dt = math.sqrt(dt)
    rho_perp = math.sqrt(1.0 - market.rho * market.rho)

    decay = math.exp(-rate.kappa * dt)
    if rate.kappa < KAPPA_SERIES_THRESHOLD:
        ou_scale = rate.delta * sqrt_dt
    else:
        ou_scale = rate.delta * math.sqrt(-math.expm1(-2.0 * rate.kappa * dt) / (2.0 * rate.kappa))

    r = np.full(size, market.r0)
    X = np.full(size, math.log(market.S0))
    alive = np.full(size, market.S0 >= s_min)
    floor = max(s_min, PRICE_FLOOR)
    lam = hazard(0.0, np.maximum(np.exp(X), floor), eq)
    integral = np.zeros(size)

    wanted = {k: i for i, k in enumerate(record)}
    D_out = np.empty((size, len(record)))
    r_out = np.empty((size, len(record)))

    def _store(k: int) -> None:
        if k in wanted:
            i = wanted[k]
            D_out[:, i] = np.where(alive, np.exp(-integral), 0.0)
            r_out[:, i] = r

    _store(0)
    for k in range(grid.n_steps):
        t = k * dt
        z1, zp = _normals(rng, size, mc.antithetic)

        S = np.maximum(np.exp(X), floor)
        sigma = eq.a(t) * np.power(S, eq.beta)
        X_next = X + (r - 0.5 * sigma * sigma + lam) * dt + sigma * sqrt_dt * (market.rho * z1 + rho_perp * zp)
        if rate.kappa < KAPPA_SERIES_THRESHOLD:
            r_next = r + ou_scale * z1
        else:
            r_next = rate.theta + (r - rate.theta) * decay + ou_scale * z1

        lam_next = hazard(t + dt, np.maximum(np.exp(X_next), floor), eq)
        integral = integral + 0.5 * dt * ((r + lam) + (r_next + lam_next))
        alive = alive & (np.exp(X_next) >= s_min)
        X = np.where(alive, X_next, X)
        r, lam = r_next, lam_next
        _store(k + 1)

    return D_out, r_out


def _s_min(cfg: RunConfig, horizon: float) -> float:
    m = cfg.model
    return build_domain(m.equity, m.rate, m.market, horizon, cfg.truncation).s_min


def simulate_discounts(
    horizon: float,
    dates: Sequence[float],
    mc: McConfig,
    params: ModelParams,
    s_min: float = 0.0,
) -> DiscountPaths:
    """
    경로별 D(t), r(t) 시뮬레이션

    Args:
        horizon: 시뮬레이션 끝 시각
        dates: 기록할 날짜 (격자에 맞춰 반올림)
        mc: 경로 수, dt, seed, 대칭 변수
        params: 모델 파라미터
        s_min: 흡수 하한 1/s_max (0 이면 흡수 없음)

    Returns:
        DiscountPaths
    """
    grid = SimulationGrid.build(horizon, mc.dt)
    record = [grid.snap(t) for t in dates]
    sizes = _block_sizes(mc.n_paths, settings.MC_BLOCK_SIZE)
    args = [(b, size, grid, record, params, mc, s_min) for b, size in enumerate(sizes)]

    workers = max(1, settings.WORKERS)
    if workers == 1 or len(args) == 1:
        blocks = [_simulate_block(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_block, *a) for a in args]
            blocks = [f.result() for f in futures]

    discount = np.concatenate([b[0] for b in blocks], axis=0)
    rate = np.concatenate([b[1] for b in blocks], axis=0)
    logger.info(
        "Simulated %d paths over %.4g years (%d steps, %d blocks)",
        mc.n_paths, horizon, grid.n_steps, len(sizes),
    )
    return DiscountPaths(dates=list(dates), discount=discount, rate=rate)


def estimate_u1(T: float, cfg: RunConfig) -> McEstimate:
    """E[D(T)]."""
    if T <= 0.0:
        return McEstimate(mean=1.0, std_error=0.0, n_paths=cfg.mc.n_paths)
    paths = simulate_discounts(T, [T], cfg.mc, cfg.model, _s_min(cfg, max(T, cfg.bond.maturity)))
    return McEstimate.from_samples(paths.discount[:, 0])


def estimate_u2(tau1: float, cfg: RunConfig) -> McEstimate:
    """E[D(tau1) r(tau1)]. tau1 = 0 이면 (r0, 0)."""
    if tau1 <= 0.0:
        return McEstimate(mean=cfg.model.market.r0, std_error=0.0, n_paths=cfg.mc.n_paths)
    paths = simulate_discounts(tau1, [tau1], cfg.mc, cfg.model, _s_min(cfg, max(tau1, cfg.bond.maturity)))
    return McEstimate.from_samples(paths.discount[:, 0] * paths.rate[:, 0])


def bond_payoffs(spec: BondSpec, paths: DiscountPaths) -> np.ndarray:
    """경로별 채권가 (쿠폰, 원금, 회수 세 항). 적분은 균등 격자 jT/M 위 사다리꼴."""
    M = spec.n_coupons
    h = spec.maturity / M
    D_T = paths.discount[:, paths.column(spec.maturity)]

    coupons = np.zeros_like(D_T)
    for t, cp in zip(spec.coupon_dates, spec.coupon_amounts):
        coupons += cp * paths.discount[:, paths.column(t)]

    weighted = [paths.discount[:, paths.column(j * h)] * paths.rate[:, paths.column(j * h)] for j in range(M + 1)]
    integral = 0.5 * h * (weighted[0] + 2.0 * sum(weighted[1:-1], np.zeros_like(D_T)) + weighted[-1])
    return spec.face_value * (coupons + D_T + spec.recovery * (1.0 - D_T - integral))


def estimate_bond(spec: BondSpec, cfg: RunConfig) -> McEstimate:
    """
    채권가 Monte Carlo 추정

    모든 날짜가 같은 경로를 공유한다.
    """
    h = spec.maturity / spec.n_coupons
    dates = sorted({0.0, *spec.coupon_dates, *(j * h for j in range(1, spec.n_coupons + 1))})
    paths = simulate_discounts(spec.maturity, dates, cfg.mc, cfg.model, _s_min(cfg, spec.maturity))
    estimate = McEstimate.from_samples(bond_payoffs(spec, paths))
    lo, hi = estimate.ci95
    logger.info("MC bond value %.9g (95%% CI [%.9g, %.9g])", estimate.mean, lo, hi)
    return estimate
