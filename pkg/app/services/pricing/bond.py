"""
JDCEV Bond Engine - Bond Pricer

부도가능 쿠폰채 가격 계산
- 쿠폰 날짜별 u1 풀이, 균등 격자 jT/M 에서 u2 풀이
- 합성 사다리꼴 규칙으로 적분항 계산
- 채권가 V = FV [sum cp_i u1(t_i) + u1(T) + eta (1 - u1(T) - int u2)]
- 무위험 할인채 곡선 (lambda == 0, 해석해 / 시장가 비교)
- 격자 x 시간 수렴표, 절점별 채권가 곡면

독립적인 풀이들은 settings.WORKERS 개 프로세스로 병렬 실행하며,
결과는 (종류, 날짜) 키로 모아 고정 순서로 합친다.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import LengthMismatchError, MissingDateError
from app.models.params import BondSpec
from app.models.run import RunConfig
from app.services.model.core import vasicek_zcb
from app.services.pde.fem import Assembler, FemMesh, build_mesh
from app.services.pde.localization import BoundaryData, ProblemKind, TransformedDomain, build_domain
from app.services.pde.semilag import Solution, TimeGrid, solve_ibvp

logger = logging.getLogger(__name__)

# 날짜 키 비교 허용오차
DATE_TOL = 1e-9

DEFAULT_SWEEP_MESHES = (4, 8, 16, 32)
DEFAULT_SWEEP_STEPS = (90, 180, 360)


@dataclass
class PricingResult:
    """채권가와 그 구성 요소."""

    bond_value: float
    u1_values: Dict[float, float]
    u2_values: Dict[float, float]
    integral_term: float
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "bond_value": self.bond_value,
            "u1_values": {str(k): v for k, v in self.u1_values.items()},
            "u2_values": {str(k): v for k, v in self.u2_values.items()},
            "integral_term": self.integral_term,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class ZcbRow:
    maturity: float
    model: float
    analytic: float
    market: Optional[float] = None

    @property
    def difference(self) -> Optional[float]:
        """model - market."""
        return None if self.market is None else self.model - self.market

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {
            "maturity": self.maturity,
            "model": self.model,
            "analytic": self.analytic,
            "market": self.market,
            "difference": self.difference,
        }


@dataclass
class SweepResult:
    """수렴표: table[steps_per_year][mesh] = 채권가."""

    meshes: List[int]
    steps: List[int]
    table: Dict[int, Dict[int, float]]

    def mesh_differences(self, steps_per_year: int) -> List[float]:
        """연속한 격자 사이의 |V_{2h} - V_h|."""
        row = self.table[steps_per_year]
        return [abs(row[b] - row[a]) for a, b in zip(self.meshes, self.meshes[1:])]

    def step_differences(self, mesh: int) -> List[float]:
        """연속한 시간 스텝 수 사이의 차이."""
        return [abs(self.table[b][mesh] - self.table[a][mesh]) for a, b in zip(self.steps, self.steps[1:])]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "meshes": self.meshes,
            "steps": self.steps,
            "table": {str(s): {str(m): v for m, v in row.items()} for s, row in self.table.items()},
        }


@dataclass
class BondSurface:
    """t = 0 에서 절점별 (S, r, 채권가), 절점 순서 (x1 이 빠른 행 우선)."""

    S: np.ndarray
    r: np.ndarray
    values: np.ndarray
    mesh: Dict[str, int]


class SolveTask(NamedTuple):
    kind: ProblemKind
    maturity: float


# ============================================================
# 공통 구성
# ============================================================

def _domain(cfg: RunConfig, horizon: float) -> TransformedDomain:
    m = cfg.model
    return build_domain(
        m.equity, m.rate, m.market, horizon, cfg.truncation, boundary=BoundaryData(cfg.numerics.boundary_data)
    )


def _mesh(cfg: RunConfig, d: TransformedDomain) -> FemMesh:
    n = cfg.numerics.mesh
    return build_mesh(n, n, d)


def _solve_task(task: SolveTask, cfg: RunConfig, horizon: float, assembler: Optional[Assembler] = None) -> Solution:
    d = _domain(cfg, horizon)
    mesh = assembler.mesh if assembler is not None else _mesh(cfg, d)
    grid = TimeGrid.from_steps_per_year(task.maturity, cfg.numerics.steps_per_year)
    return solve_ibvp(
        task.kind, task.maturity, grid, mesh, d,
        solver=cfg.numerics.solver, rtol=cfg.numerics.krylov_rtol, assembler=assembler,
    )


def solve_all(tasks: Sequence[SolveTask], cfg: RunConfig, horizon: float) -> Dict[SolveTask, Solution]:
    """
    독립 풀이 실행

    WORKERS == 1 이면 같은 성분 행렬을 공유하며 직렬로 푼다.
    그 외에는 ProcessPoolExecutor 로 병렬 실행.
    """
    workers = max(1, settings.WORKERS)
    if workers == 1 or len(tasks) == 1:
        d = _domain(cfg, horizon)
        assembler = Assembler(_mesh(cfg, d), d)
        return {task: _solve_task(task, cfg, horizon, assembler) for task in tasks}

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {task: pool.submit(_solve_task, task, cfg, horizon) for task in tasks}
        return {task: futures[task].result() for task in tasks}


def _lookup(values: Mapping[float, float], date: float) -> float:
    for key, value in values.items():
        if abs(key - date) <= DATE_TOL:
            return value
    raise MissingDateError(f"no u1 value for date {date}")


def u2_dates(spec: BondSpec) -> List[float]:
    """사다리꼴 격자 k_j = j T / M, j = 0..M."""
    M = spec.n_coupons
    h = spec.maturity / M
    return [j * h for j in range(M + 1)]


# ============================================================
# 단일 값
# ============================================================

def price_u1(Ti: float, cfg: RunConfig) -> float:
    """u1(0, S0, r0; Ti). Ti <= 0 이면 1."""
    if Ti <= 0.0:
        return 1.0
    horizon = max(Ti, cfg.bond.maturity)
    solution = _solve_task(SolveTask(ProblemKind.U1, Ti), cfg, horizon)
    return solution.value_at(cfg.model.market.S0, cfg.model.market.r0)


def price_u2(tau1: float, cfg: RunConfig) -> float:
    """u2(0, S0, r0; tau1). tau1 = 0 이면 풀이 없이 r0."""
    market = cfg.model.market
    if tau1 <= 0.0:
        return market.r0
    horizon = max(tau1, cfg.bond.maturity)
    solution = _solve_task(SolveTask(ProblemKind.U2, tau1), cfg, horizon)
    return solution.value_at(market.S0, market.r0)


def trapezoid_integral(values: Sequence[float], h: float, intervals: Optional[int] = None) -> float:
    """
    합성 사다리꼴 규칙 (h/2)[v0 + 2 sum v_j + v_M]

    Args:
        values: M+1 개의 값
        h: 간격 T/M (> 0)
        intervals: M (주어지면 길이 검사)
    """
    n = len(values)
    if n < 2 or (intervals is not None and n != intervals + 1):
        expected = "at least 2" if intervals is None else str(intervals + 1)
        raise LengthMismatchError(f"trapezoid needs {expected} values, got {n}")
    if h <= 0.0:
        raise LengthMismatchError(f"trapezoid spacing must be > 0, got {h}")
    v = np.asarray(values, dtype=float)
    return float(0.5 * h * (v[0] + 2.0 * v[1:-1].sum() + v[-1]))


def bond_value(
    spec: BondSpec,
    u1: Mapping[float, float],
    u2: Optional[Mapping[float, float]] = None,
    integral: Optional[float] = None,
) -> float:
    """
    채권가 식

    Args:
        spec: 채권 계약
        u1: 쿠폰 날짜 -> u1
        u2: 날짜 jT/M -> u2 (integral 이 없을 때 적분에 사용)
        integral: int_0^T u2 (주어지면 그대로 사용)
    """
    if integral is None:
        if u2 is None:
            raise MissingDateError("bond_value needs either u2 values or the integral term")
        dates = u2_dates(spec)
        integral = trapezoid_integral(
            [_u2_lookup(u2, t) for t in dates], spec.maturity / spec.n_coupons, spec.n_coupons
        )

    coupons = sum(cp * _lookup(u1, t) for t, cp in zip(spec.coupon_dates, spec.coupon_amounts))
    u1_T = _lookup(u1, spec.maturity)
    return spec.face_value * (coupons + u1_T + spec.recovery * (1.0 - u1_T - integral))


def _u2_lookup(u2: Mapping[float, float], date: float) -> float:
    try:
        return _lookup(u2, date)
    except MissingDateError:
        raise MissingDateError(f"no u2 value for date {date}") from None


# ============================================================
# 채권 전체
# ============================================================

def _pipeline_tasks(spec: BondSpec) -> List[SolveTask]:
    tasks = [SolveTask(ProblemKind.U1, t) for t in spec.coupon_dates]
    tasks += [SolveTask(ProblemKind.U2, t) for t in u2_dates(spec)[1:]]
    return tasks


def _solve_pipeline(spec: BondSpec, cfg: RunConfig) -> Dict[SolveTask, Solution]:
    tasks = _pipeline_tasks(spec)
    logger.info(
        "Pricing bond T=%.4g with %d solves (mesh %d, %d steps/year, workers %d)",
        spec.maturity, len(tasks), cfg.numerics.mesh, cfg.numerics.steps_per_year, settings.WORKERS,
    )
    return solve_all(tasks, cfg, spec.maturity)


def price(spec: BondSpec, cfg: RunConfig) -> PricingResult:
    """
    채권가 계산

    쿠폰 날짜마다 U1, 날짜 h, 2h, ..., T (h = T/M) 마다 U2 를 풀고
    사다리꼴 적분과 채권가 식으로 합친다.
    """
    started = time.perf_counter()
    solutions = _solve_pipeline(spec, cfg)
    S0, r0 = cfg.model.market.S0, cfg.model.market.r0

    u1_values: Dict[float, float] = {}
    u2_values: Dict[float, float] = {0.0: r0}
    for task, solution in solutions.items():
        value = solution.value_at(S0, r0)
        if task.kind is ProblemKind.U1:
            u1_values[task.maturity] = value
        else:
            u2_values[task.maturity] = value

    dates = u2_dates(spec)
    integral = trapezoid_integral(
        [u2_values[t] for t in dates], spec.maturity / spec.n_coupons, spec.n_coupons
    )
    value = bond_value(spec, u1_values, integral=integral)

    any_solution = next(iter(solutions.values()))
    d = any_solution.domain
    diagnostics = {
        "mesh": cfg.numerics.mesh,
        "steps_per_year": cfg.numerics.steps_per_year,
        "solver": cfg.numerics.solver,
        "workers": settings.WORKERS,
        **any_solution.mesh.describe(),
        "s_max": d.s_max,
        "y_half": d.y_half,
        "boundary_data": d.boundary.value,
        "solves": [
            {"kind": task.kind.value, "maturity": task.maturity, **solutions[task].diagnostics.as_dict()}
            for task in solutions
        ],
        "elapsed_seconds": time.perf_counter() - started,
    }
    logger.info("Bond value %.9g (integral term %.9g)", value, integral)
    return PricingResult(
        bond_value=value,
        u1_values=u1_values,
        u2_values=u2_values,
        integral_term=integral,
        diagnostics=diagnostics,
    )


def surface(spec: BondSpec, cfg: RunConfig) -> BondSurface:
    """
    절점별 채권가 곡면

    모든 풀이의 기하가 같으므로 절점 필드를 그대로 채권가 식에 넣는다.
    u2(0) 는 각 절점의 r.
    """
    solutions = _solve_pipeline(spec, cfg)
    first = solutions[SolveTask(ProblemKind.U1, spec.coupon_dates[0])]
    S, r = first.node_coordinates()

    u1 = {t: solutions[SolveTask(ProblemKind.U1, t)].values for t in spec.coupon_dates}
    u2_fields = [r] + [solutions[SolveTask(ProblemKind.U2, t)].values for t in u2_dates(spec)[1:]]

    h = spec.maturity / spec.n_coupons
    integral = 0.5 * h * (u2_fields[0] + 2.0 * sum(u2_fields[1:-1], np.zeros_like(r)) + u2_fields[-1])
    coupons = sum(cp * u1[t] for t, cp in zip(spec.coupon_dates, spec.coupon_amounts))
    u1_T = u1[spec.maturity]
    values = spec.face_value * (coupons + u1_T + spec.recovery * (1.0 - u1_T - integral))
    return BondSurface(S=S, r=r, values=values, mesh=first.mesh.describe())


def sweep(
    spec: BondSpec,
    cfg: RunConfig,
    meshes: Sequence[int] = DEFAULT_SWEEP_MESHES,
    steps: Sequence[int] = DEFAULT_SWEEP_STEPS,
) -> SweepResult:
    """격자 x 연간 스텝 수 전체 표."""
    table: Dict[int, Dict[int, float]] = {}
    for spy in steps:
        table[spy] = {}
        for n in meshes:
            result = price(spec, cfg.with_numerics(mesh=n, steps_per_year=spy))
            table[spy][n] = result.bond_value
            logger.info("sweep steps/year=%d mesh=%d -> %.9g", spy, n, result.bond_value)
    return SweepResult(meshes=list(meshes), steps=list(steps), table=table)


# ============================================================
# 무위험 할인채 곡선
# ============================================================

def _market_value(cfg: RunConfig, maturity: float) -> Optional[float]:
    for key, value in cfg.zcb.market.items():
        try:
            if abs(float(key) - maturity) <= DATE_TOL:
                return value
        except ValueError:
            continue
    return None


def zcb_curve(maturities: Sequence[float], cfg: RunConfig) -> List[ZcbRow]:
    """
    lambda == 0 할인채 곡선

    각 만기마다 PDE 값, Vasicek 해석해, (있으면) 시장가를 보고한다.
    절단 영역은 설정의 zcb.maturities 로 정하므로 요청한 만기 부분집합과 무관하다.
    """
    free = cfg.without_hazard()
    market = free.model.market
    positive = [t for t in maturities if t > 0.0]

    solved: Dict[SolveTask, Solution] = {}
    if positive:
        horizon = max(list(cfg.zcb.maturities) + positive)
        solved = solve_all([SolveTask(ProblemKind.U1, t) for t in positive], free, horizon)

    rows = []
    for t in maturities:
        if t > 0.0:
            model = solved[SolveTask(ProblemKind.U1, t)].value_at(market.S0, market.r0)
        else:
            model = 1.0
        analytic = vasicek_zcb(market.r0, max(t, 0.0), free.model.rate)
        rows.append(ZcbRow(maturity=t, model=model, analytic=analytic, market=_market_value(cfg, t)))
    return rows
