"""
JDCEV Bond Engine - Characteristics Crank-Nicolson Solver

특성곡선 + Crank-Nicolson 시간 전진
- 2차 Runge-Kutta (중점) 역방향 추적으로 특성곡선의 발 X^n(x) 계산
- 우변: 변분식의 모든 적분 (비고전 Green 공식 보정항 포함)
- 경계조건: Gamma1-, Gamma2-, Gamma2+ 에 Dirichlet, Gamma1+ 에 동차 Neumann (약형)
- 전체 IBVP 풀이
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from app.core.errors import LinearSolverError
from app.services.model.core import year_steps
from app.services.pde.fem import (
    GAUSS_POINTS,
    GAUSS_WEIGHTS,
    Assembler,
    FemMesh,
    FieldVector,
    SparseOperator,
    evaluate,
    interpolate,
    lagrange_1d,
    nodal_interpolant,
)
from app.services.pde.localization import (
    Face,
    ProblemKind,
    TransformedDomain,
    diffusion,
    dirichlet_data,
    from_computational,
    grad_div_velocity,
    initial_data,
    reaction,
    to_computational,
    velocity,
    velocity_jacobian,
)

logger = logging.getLogger(__name__)

# 이 비율을 넘으면 영역이 작다는 경고
CLAMP_WARN_FRACTION = 0.01
# U1 최소값 하한 (CN 은 단조가 아님)
POSITIVITY_SLACK = -1e-8

DIRICHLET_FACES = (Face.GAMMA1_MINUS, Face.GAMMA2_MINUS, Face.GAMMA2_PLUS)


@dataclass(frozen=True)
class TimeGrid:
    """tau 방향 균등 시간 격자."""

    T1: float
    N: int

    @property
    def dt(self) -> float:
        return self.T1 / self.N

    @classmethod
    def from_steps_per_year(cls, T1: float, steps_per_year: int) -> "TimeGrid":
        return cls(T1=T1, N=year_steps(T1, steps_per_year))


class TracedFeet(NamedTuple):
    feet: np.ndarray
    clamped: int


@dataclass
class SolveDiagnostics:
    """풀이 진단 정보."""

    steps: int = 0
    traced: int = 0
    clamped: int = 0
    max_residual: float = 0.0
    min_value: float = float("inf")
    max_value: float = float("-inf")
    elapsed_seconds: float = 0.0

    @property
    def clamped_fraction(self) -> float:
        return self.clamped / self.traced if self.traced else 0.0

    def as_dict(self) -> Dict[str, float]:
        return {
            "steps": self.steps,
            "traced": self.traced,
            "clamped": self.clamped,
            "clamped_fraction": self.clamped_fraction,
            "max_residual": self.max_residual,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "elapsed_seconds": self.elapsed_seconds,
        }


@dataclass(frozen=True)
class Solution:
    """tau = T1 (t = 0) 에서의 이산 해."""

    values: FieldVector
    kind: ProblemKind
    domain: TransformedDomain
    mesh: FemMesh = field(repr=False)
    diagnostics: SolveDiagnostics = field(default_factory=SolveDiagnostics)

    def value_at(self, S: float, r: float) -> float:
        """금융 좌표 (S, r) 에서의 값 (t = 0 이므로 y = r)."""
        x1, x2 = to_computational(S, r, 0.0, self.domain)
        return interpolate(self.values, np.array([x1, x2]), self.mesh)

    def node_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """절점의 (S, r)."""
        nodes = self.mesh.nodes
        return from_computational(nodes[:, 0], nodes[:, 1], 0.0, self.domain)


# ============================================================
# 특성곡선 추적
# ============================================================

def _clamp(points: np.ndarray, d: TransformedDomain) -> Tuple[np.ndarray, np.ndarray]:
    upper = np.array([d.x1_max, d.x2_max])
    clamped = np.clip(points, 0.0, upper)
    moved = np.any(clamped != points, axis=1)
    return clamped, moved


def trace_feet(tau_next: float, dt: float, points: np.ndarray, d: TransformedDomain) -> TracedFeet:
    """
    RK2 (중점) 한 스텝으로 tau_next -> tau_next - dt 역추적

    k1 = v(tau_next, x), k2 = v(tau_next - dt/2, x - dt/2 k1), foot = x - dt k2
    사각형을 벗어난 발(과 중점)은 성분별로 잘라내고 그 개수를 보고한다.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k1 = velocity(tau_next, points[:, 0], points[:, 1], d)
    mid, _ = _clamp(points - 0.5 * dt * k1, d)
    k2 = velocity(tau_next - 0.5 * dt, mid[:, 0], mid[:, 1], d)
    feet, moved = _clamp(points - dt * k2, d)
    return TracedFeet(feet=feet, clamped=int(moved.sum()))


# ============================================================
# 시간 전진기
# ============================================================

class CharacteristicsStepper:
    """
    한 문제(격자, 영역)에 대한 CN-특성곡선 스텝 계산기

    성분 행렬과 구적점, Gamma1+ 변 구적을 미리 만들어 둔다.
    """

    def __init__(self, mesh: FemMesh, d: TransformedDomain, assembler: Optional[Assembler] = None):
        self.mesh = mesh
        self.domain = d
        self.assembler = assembler if assembler is not None else Assembler(mesh, d)
        self.points = self.assembler.quad_points.reshape(-1, 2)
        self._shape = self.assembler.quad_points.shape[:2]

        # Gamma1+ 변 구적 (x1 = x1_max)
        mx = 2 * mesh.nx + 1
        ey = np.arange(mesh.ny)
        eta_y = (ey[:, None] + 0.5 * (GAUSS_POINTS[None, :] + 1.0)) * mesh.hy
        self.edge_points = np.column_stack(
            [np.full(eta_y.size, d.x1_max), eta_y.ravel()]
        )
        self.edge_weights = np.tile(GAUSS_WEIGHTS * 0.5 * mesh.hy, mesh.ny)
        self.edge_shape = np.tile(lagrange_1d(GAUSS_POINTS), (mesh.ny, 1))  # (ny*3, 3)
        jj = np.arange(3)
        edge_nodes = (2 * ey[:, None] + jj[None, :]) * mx + (mx - 1)  # (ny, 3)
        self.edge_nodes = np.repeat(edge_nodes, 3, axis=0)  # 구적점별 (ny*3, 3)

        dirichlet = np.unique(np.concatenate([mesh.boundary[f] for f in DIRICHLET_FACES]))
        self.dirichlet_nodes = dirichlet
        mask = np.ones(mesh.n_nodes)
        mask[dirichlet] = 0.0
        self._free = sparse.diags(mask)
        self._fixed = sparse.diags(1.0 - mask)

    def rhs(self, u_prev: FieldVector, tau_next: float, dt: float) -> Tuple[np.ndarray, int]:
        """
        우변 벡터

        (1/dt) int u^n(X) psi - 1/2 int (A grad u^n)(X) . grad psi
        - dt/2 int L^n(X)(A grad u^n)(X) . grad psi - 1/2 int (l u^n)(X) psi
        - dt/2 int grad Div v^n(X) . (A grad u^n)(X) psi + Gamma1+ 경계 적분

        Returns:
            (rhs, 잘린 발 개수)
        """
        d = self.domain
        tau_n = tau_next - dt
        traced = trace_feet(tau_next, dt, self.points, d)
        feet = traced.feet
        u, grad = evaluate(u_prev, feet, self.mesh)
        x1f, x2f = feet[:, 0], feet[:, 1]

        A = diffusion(tau_n, x1f, d)
        flux = np.einsum("nij,nj->ni", A, grad)
        L = velocity_jacobian(tau_n, x1f, x2f, d)
        l_vals = reaction(tau_n, x1f, x2f, d)
        gdv = grad_div_velocity(tau_n, x1f, x2f, d)

        scalar = u / dt - 0.5 * l_vals * u - 0.5 * dt * np.einsum("ni,ni->n", gdv, flux)
        vector = -0.5 * flux - 0.5 * dt * np.einsum("nij,nj->ni", L, flux)

        asm = self.assembler
        rhs = asm.load_vector(scalar.reshape(self._shape))
        rhs += asm.gradient_load_vector(vector.reshape(self._shape + (2,)))
        rhs += self._neumann_rhs(u_prev, tau_next, dt)
        return rhs, traced.clamped

    def _neumann_rhs(self, u_prev: FieldVector, tau_next: float, dt: float) -> np.ndarray:
        """
        Gamma1+ (n = (1, 0)) 경계 적분

        1/2 int n . (I + dt L^n(X)) (A grad u^n)(X) psi   (d u / d x1 = 0 적용)
        + 1/2 int a12 d u / d x2 psi
        """
        d = self.domain
        tau_n = tau_next - dt
        pts = self.edge_points
        feet = trace_feet(tau_next, dt, pts, d).feet
        _, grad_f = evaluate(u_prev, feet, self.mesh)
        grad_f[:, 0] = 0.0

        A_f = diffusion(tau_n, feet[:, 0], d)
        flux = np.einsum("nij,nj->ni", A_f, grad_f)
        L_f = velocity_jacobian(tau_n, feet[:, 0], feet[:, 1], d)
        traced_flux = flux[:, 0] + dt * np.einsum("nj,nj->n", L_f[:, 0, :], flux)

        _, grad_b = evaluate(u_prev, pts, self.mesh)
        a12 = diffusion(tau_next, pts[:, 0], d)[:, 0, 1]
        density = 0.5 * (traced_flux + a12 * grad_b[:, 1]) * self.edge_weights

        return np.bincount(
            self.edge_nodes.ravel(),
            weights=(density[:, None] * self.edge_shape).ravel(),
            minlength=self.mesh.n_nodes,
        )

    def apply_boundary(
        self, lhs: SparseOperator, rhs: np.ndarray, kind: ProblemKind, tau_next: float
    ) -> Tuple[SparseOperator, np.ndarray]:
        """Dirichlet 행을 항등 행으로 교체하고 rhs 에 f 를 넣는다 (Dirichlet 우선)."""
        nodes = self.mesh.nodes[self.dirichlet_nodes]
        f = dirichlet_data(kind, tau_next, nodes[:, 0], nodes[:, 1], self.domain)
        lhs = (self._free @ lhs + self._fixed).tocsr()
        rhs = rhs.copy()
        rhs[self.dirichlet_nodes] = f
        return lhs, rhs


def assemble_rhs(
    u_prev: FieldVector, tau_next: float, dt: float, d: TransformedDomain, mesh: FemMesh
) -> np.ndarray:
    """단발성 우변 조립 (테스트/진단용)."""
    rhs, _ = CharacteristicsStepper(mesh, d).rhs(u_prev, tau_next, dt)
    return rhs


def apply_boundary(
    lhs: SparseOperator,
    rhs: np.ndarray,
    kind: ProblemKind,
    tau_next: float,
    d: TransformedDomain,
    mesh: FemMesh,
) -> Tuple[SparseOperator, np.ndarray]:
    return CharacteristicsStepper(mesh, d).apply_boundary(lhs, rhs, kind, tau_next)


# ============================================================
# 선형 풀이
# ============================================================

def _solve_linear(
    lhs: SparseOperator, rhs: np.ndarray, step: int, solver: str, rtol: float
) -> np.ndarray:
    if solver == "direct":
        try:
            sol = splinalg.splu(lhs.tocsc()).solve(rhs)
        except RuntimeError as e:
            raise LinearSolverError(f"sparse factorization failed: {e}", step=step) from e
    elif solver == "krylov":
        try:
            ilu = splinalg.spilu(lhs.tocsc(), drop_tol=1e-6)
        except RuntimeError as e:
            raise LinearSolverError(f"ILU preconditioner failed: {e}", step=step) from e
        precond = splinalg.LinearOperator(lhs.shape, ilu.solve)
        sol, info = splinalg.gmres(lhs, rhs, M=precond, rtol=rtol, atol=0.0, restart=50, maxiter=200)
        if info != 0:
            raise LinearSolverError(f"GMRES did not converge (info={info})", step=step)
    else:
        raise LinearSolverError(f"unknown solver '{solver}'", step=step)

    if not np.all(np.isfinite(sol)):
        raise LinearSolverError("non-finite solution", step=step)
    return sol


def solve_ibvp(
    kind: ProblemKind,
    T1: float,
    grid: TimeGrid,
    mesh: FemMesh,
    d: TransformedDomain,
    solver: str = "direct",
    rtol: float = 1e-10,
    assembler: Optional[Assembler] = None,
) -> Solution:
    """
    IBVP 풀이: u^0 = g 의 절점 보간에서 시작해 N 스텝 전진

    Args:
        kind: U1 / U2
        T1: 만기
        grid: 시간 격자 (grid.T1 == T1)
        mesh, d: 격자와 영역 (d 의 만기는 T1 로 맞춘다)
        solver: "direct" (희소 LU) 또는 "krylov" (ILU-GMRES)
        assembler: 같은 격자의 다른 풀이와 성분 행렬을 공유할 때

    Returns:
        Solution: tau = T1 (t = 0) 에서의 해
    """
    started = time.perf_counter()
    d = d.with_maturity(T1)
    if assembler is not None:
        assembler = assembler.for_domain(d)
    stepper = CharacteristicsStepper(mesh, d, assembler)
    dt = grid.dt

    u = nodal_interpolant(lambda x1, x2: initial_data(kind, x1, x2, d), mesh)
    diag = SolveDiagnostics()

    for n in range(grid.N):
        tau_next = (n + 1) * dt
        lhs = stepper.assembler.lhs(tau_next, dt)
        rhs, clamped = stepper.rhs(u, tau_next, dt)
        lhs, rhs = stepper.apply_boundary(lhs, rhs, kind, tau_next)
        u = _solve_linear(lhs, rhs, n, solver, rtol)

        residual = np.linalg.norm(lhs @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
        diag.steps += 1
        diag.traced += stepper.points.shape[0]
        diag.clamped += clamped
        diag.max_residual = max(diag.max_residual, float(residual))
        logger.debug("step %d/%d tau=%.6f clamped=%d residual=%.2e", n + 1, grid.N, tau_next, clamped, residual)

    diag.min_value = float(u.min())
    diag.max_value = float(u.max())
    diag.elapsed_seconds = time.perf_counter() - started

    logger.info(
        "Solved %s T1=%.4g mesh=%dx%d steps=%d in %.2fs (clamped %.3f%%)",
        kind.value, T1, mesh.nx, mesh.ny, grid.N, diag.elapsed_seconds, 100.0 * diag.clamped_fraction,
    )
    if diag.clamped_fraction > CLAMP_WARN_FRACTION:
        logger.warning(
            "%.2f%% of characteristic feet clamped; truncation domain may be undersized",
            100.0 * diag.clamped_fraction,
        )
    if kind is ProblemKind.U1 and diag.min_value < POSITIVITY_SLACK:
        logger.warning("discrete U1 minimum %.3e below positivity slack", diag.min_value)

    return Solution(values=u, kind=kind, domain=d, mesh=mesh, diagnostics=diag)
