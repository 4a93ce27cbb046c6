"""
JDCEV Bond Engine - Finite Elements

사각형 계산 영역의 구조 격자와 Q2 (쌍이차 Lagrange) 요소
- 균등 텐서 격자 (요소당 9 절점)
- 3x3 Gauss-Legendre 구적
- 희소 행렬 조립 (질량 / 강성 / 반응)
- 점 위치 찾기와 보간 (특성 곡선 발의 값 계산용)

절점 번호: node = j * (2 nx + 1) + i  (i: x1 방향, j: x2 방향)
요소 내 국소 번호: k = jj * 3 + ii
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from app.core.errors import MeshSizeError, OutOfDomainError
from app.services.pde.localization import (
    BOUNDARY_TOL,
    Face,
    TransformedDomain,
    diffusion,
    reaction,
)

logger = logging.getLogger(__name__)

SparseOperator = sparse.csr_matrix
FieldVector = np.ndarray

# 3점 Gauss-Legendre
GAUSS_POINTS, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)


# ============================================================
# 1차원 2차 Lagrange 기저 (-1, 0, 1)
# ============================================================

def lagrange_1d(xi) -> np.ndarray:
    """L0, L1, L2 값, shape (..., 3)."""
    xi = np.asarray(xi, dtype=float)
    return np.stack([0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)], axis=-1)


def lagrange_1d_deriv(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.stack([xi - 0.5, -2.0 * xi, xi + 0.5], axis=-1)


def q2_shape(xi, eta) -> Tuple[np.ndarray, np.ndarray]:
    """
    Q2 형상함수와 기준 좌표 도함수

    Returns:
        (N, dN): N shape (..., 9), dN shape (..., 9, 2)
    """
    Lx, Ly = lagrange_1d(xi), lagrange_1d(eta)
    dLx, dLy = lagrange_1d_deriv(xi), lagrange_1d_deriv(eta)
    N = (Ly[..., :, None] * Lx[..., None, :]).reshape(Lx.shape[:-1] + (9,))
    dN = np.stack(
        [
            (Ly[..., :, None] * dLx[..., None, :]).reshape(Lx.shape[:-1] + (9,)),
            (dLy[..., :, None] * Lx[..., None, :]).reshape(Lx.shape[:-1] + (9,)),
        ],
        axis=-1,
    )
    return N, dN


# ============================================================
# 격자
# ============================================================

@dataclass(frozen=True)
class FemMesh:
    """균등 Q2 텐서 격자."""

    nx: int
    ny: int
    x1_max: float
    x2_max: float
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    connectivity: np.ndarray = field(repr=False)
    boundary: Dict[Face, np.ndarray] = field(repr=False)

    @property
    def hx(self) -> float:
        return self.x1_max / self.nx

    @property
    def hy(self) -> float:
        return self.x2_max / self.ny

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return (2 * self.nx + 1) * (2 * self.ny + 1)

    @property
    def nodes(self) -> np.ndarray:
        """절점 좌표 (n_nodes, 2), x1 이 빠르게 변하는 행 우선 순서."""
        X, Y = np.meshgrid(self.x, self.y, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    def describe(self) -> Dict[str, int]:
        return {"mesh": self.nx, "elements": self.n_elements, "nodes": self.n_nodes}


def build_mesh(nx: int, ny: int, d: TransformedDomain) -> FemMesh:
    """
    균등 텐서 격자 생성

    Args:
        nx, ny: 축별 요소 수 (>= 1)
        d: 계산 영역

    Returns:
        FemMesh: nx*ny 요소, (2nx+1)(2ny+1) 절점
    """
    if nx < 1 or ny < 1:
        raise MeshSizeError(f"element counts must be >= 1, got ({nx}, {ny})")

    mx, my = 2 * nx + 1, 2 * ny + 1
    x = np.linspace(0.0, d.x1_max, mx)
    y = np.linspace(0.0, d.x2_max, my)

    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ex, ey = ex.ravel(), ey.ravel()
    local = np.arange(3)
    # (ne, jj, ii)
    rows = 2 * ey[:, None, None] + local[None, :, None]
    cols = 2 * ex[:, None, None] + local[None, None, :]
    connectivity = (rows * mx + cols).reshape(-1, 9)

    all_i = np.arange(mx)
    all_j = np.arange(my)
    boundary = {
        Face.GAMMA1_MINUS: all_j * mx,
        Face.GAMMA1_PLUS: all_j * mx + (mx - 1),
        Face.GAMMA2_MINUS: all_i,
        Face.GAMMA2_PLUS: (my - 1) * mx + all_i,
    }
    mesh = FemMesh(
        nx=nx, ny=ny, x1_max=d.x1_max, x2_max=d.x2_max,
        x=x, y=y, connectivity=connectivity, boundary=boundary,
    )
    logger.debug("Built mesh %s", mesh.describe())
    return mesh


# ============================================================
# 위치 찾기 / 보간
# ============================================================

def locate_many(points: np.ndarray, mesh: FemMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    점들의 요소 번호와 국소 좌표

    Args:
        points: (n, 2)

    Returns:
        (elements (n,), local (n, 2) in [-1, 1]^2)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    px, py = points[:, 0], points[:, 1]
    if (
        np.any(px < -BOUNDARY_TOL) or np.any(px > mesh.x1_max + BOUNDARY_TOL)
        or np.any(py < -BOUNDARY_TOL) or np.any(py > mesh.x2_max + BOUNDARY_TOL)
    ):
        raise OutOfDomainError("point outside the closed computational rectangle")

    hx, hy = mesh.hx, mesh.hy
    ex = np.clip(np.floor(px / hx).astype(np.int64), 0, mesh.nx - 1)
    ey = np.clip(np.floor(py / hy).astype(np.int64), 0, mesh.ny - 1)
    xi = np.clip(2.0 * (px - ex * hx) / hx - 1.0, -1.0, 1.0)
    eta = np.clip(2.0 * (py - ey * hy) / hy - 1.0, -1.0, 1.0)
    return ey * mesh.nx + ex, np.column_stack([xi, eta])


def locate(p: Sequence[float], mesh: FemMesh) -> Tuple[int, Tuple[float, float]]:
    """단일 점 위치 찾기."""
    elements, local = locate_many(np.asarray(p, dtype=float)[None, :], mesh)
    return int(elements[0]), (float(local[0, 0]), float(local[0, 1]))


def geometry_map(element: int, local: Sequence[float], mesh: FemMesh) -> Tuple[float, float]:
    """국소 좌표 -> 전역 좌표 (균등 격자의 쌍선형 사상)."""
    ex, ey = element % mesh.nx, element // mesh.nx
    return (
        (ex + 0.5 * (local[0] + 1.0)) * mesh.hx,
        (ey + 0.5 * (local[1] + 1.0)) * mesh.hy,
    )


def evaluate(u: FieldVector, points: np.ndarray, mesh: FemMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    여러 점에서 값과 기울기 동시 계산

    Returns:
        (values (n,), gradients (n, 2))
    """
    elements, local = locate_many(points, mesh)
    N, dN = q2_shape(local[:, 0], local[:, 1])
    coeffs = u[mesh.connectivity[elements]]
    values = np.einsum("na,na->n", N, coeffs)
    grads = np.einsum("nak,na->nk", dN, coeffs) * np.array([2.0 / mesh.hx, 2.0 / mesh.hy])
    return values, grads


def interpolate(u: FieldVector, p, mesh: FemMesh):
    """Q2 보간 값. p 가 (2,) 이면 스칼라, (n, 2) 이면 배열."""
    p = np.asarray(p, dtype=float)
    values, _ = evaluate(u, np.atleast_2d(p), mesh)
    return float(values[0]) if p.ndim == 1 else values


def interpolate_grad(u: FieldVector, p, mesh: FemMesh) -> np.ndarray:
    """Q2 보간 기울기."""
    p = np.asarray(p, dtype=float)
    _, grads = evaluate(u, np.atleast_2d(p), mesh)
    return grads[0] if p.ndim == 1 else grads


def nodal_interpolant(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], mesh: FemMesh) -> FieldVector:
    """절점 값으로 만든 FieldVector."""
    nodes = mesh.nodes
    return np.asarray(fn(nodes[:, 0], nodes[:, 1]), dtype=float) * np.ones(mesh.n_nodes)


# ============================================================
# 조립
# ============================================================

class Assembler:
    """
    Q2 희소 행렬 조립기

    균등 격자이므로 기준 요소 기울기와 Jacobian 은 모든 요소에서 같다.
    시간에 의존하는 계수는 시간 스칼라 x 공간 함수로 분리되므로,
    공간 성분 행렬을 한 번만 조립하고 매 스텝 선형결합한다.
    """

    def __init__(self, mesh: FemMesh, d: TransformedDomain):
        self.mesh = mesh
        self.domain = d

        xi, eta = np.meshgrid(GAUSS_POINTS, GAUSS_POINTS, indexing="xy")
        self.ref_points = np.column_stack([xi.ravel(), eta.ravel()])
        self.ref_weights = np.outer(GAUSS_WEIGHTS, GAUSS_WEIGHTS).ravel()

        N, dN = q2_shape(self.ref_points[:, 0], self.ref_points[:, 1])
        self.N = N  # (nq, 9)
        self.dN = dN * np.array([2.0 / mesh.hx, 2.0 / mesh.hy])  # (nq, 9, 2) 물리 좌표
        self.det_j = 0.25 * mesh.hx * mesh.hy

        ex = np.arange(mesh.n_elements) % mesh.nx
        ey = np.arange(mesh.n_elements) // mesh.nx
        qx = (ex[:, None] + 0.5 * (self.ref_points[None, :, 0] + 1.0)) * mesh.hx
        qy = (ey[:, None] + 0.5 * (self.ref_points[None, :, 1] + 1.0)) * mesh.hy
        self.quad_points = np.stack([qx, qy], axis=-1)  # (ne, nq, 2)
        self.quad_weights = np.broadcast_to(self.ref_weights * self.det_j, qx.shape)

        conn = mesh.connectivity
        self._rows = np.repeat(conn[:, :, None], 9, axis=2)
        self._cols = np.repeat(conn[:, None, :], 9, axis=1)

        self.mass = self.mass_matrix()
        self._components: Optional[Dict[str, SparseOperator]] = None

    def for_domain(self, d: TransformedDomain) -> "Assembler":
        """같은 기하, 다른 만기의 영역에 대한 조립기 (성분 행렬 공유)."""
        other = copy.copy(self)
        other.domain = d
        self._component_matrices()
        other._components = self._components
        return other

    # --------------------------------------------------------
    # 기본 조립 연산
    # --------------------------------------------------------

    def to_sparse(self, local: np.ndarray, order: Optional[np.ndarray] = None) -> SparseOperator:
        """요소 행렬 (ne, 9, 9) -> CSR. order 는 요소 방문 순서."""
        rows, cols = self._rows, self._cols
        if order is not None:
            local, rows, cols = local[order], rows[order], cols[order]
        n = self.mesh.n_nodes
        mat = sparse.coo_matrix(
            (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
        ).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    def mass_matrix(self, coef: Optional[np.ndarray] = None) -> SparseOperator:
        """int coef phi_a phi_b. coef shape (ne, nq) 또는 None (=1)."""
        w = self.quad_weights if coef is None else coef * self.quad_weights
        local = np.einsum("eq,qa,qb->eab", w, self.N, self.N)
        return self.to_sparse(local)

    def stiffness_matrix(self, coef: np.ndarray, order: Optional[np.ndarray] = None) -> SparseOperator:
        """int (C grad phi_b) . grad phi_a, coef shape (ne, nq, 2, 2)."""
        wc = coef * self.quad_weights[:, :, None, None]
        local = np.einsum("eqij,qbj,qai->eab", wc, self.dN, self.dN)
        return self.to_sparse(local, order)

    def load_vector(self, values: np.ndarray) -> np.ndarray:
        """int f phi_a, values shape (ne, nq)."""
        local = np.einsum("eq,qa->ea", values * self.quad_weights, self.N)
        return np.bincount(
            self.mesh.connectivity.ravel(), weights=local.ravel(), minlength=self.mesh.n_nodes
        )

    def gradient_load_vector(self, flux: np.ndarray) -> np.ndarray:
        """int F . grad phi_a, flux shape (ne, nq, 2)."""
        local = np.einsum("eqk,qak->ea", flux * self.quad_weights[:, :, None], self.dN)
        return np.bincount(
            self.mesh.connectivity.ravel(), weights=local.ravel(), minlength=self.mesh.n_nodes
        )

    # --------------------------------------------------------
    # IBVP 연산자
    # --------------------------------------------------------

    def _component_matrices(self) -> Dict[str, SparseOperator]:
        """시간 무관 공간 성분 행렬 (지연 생성)."""
        if self._components is None:
            d = self.domain
            beta = d.equity.beta
            s = self.quad_points[..., 0] + d.s_min
            y = self.quad_points[..., 1] - d.y_half

            c11 = np.zeros(s.shape + (2, 2))
            c11[..., 0, 0] = s ** (2.0 * beta + 2.0)
            c12 = np.zeros(s.shape + (2, 2))
            c12[..., 0, 1] = c12[..., 1, 0] = s ** (beta + 1.0)
            c22 = np.zeros(s.shape + (2, 2))
            c22[..., 1, 1] = 1.0

            self._components = {
                "K11": self.stiffness_matrix(c11),
                "K12": self.stiffness_matrix(c12),
                "K22": self.stiffness_matrix(c22),
                "Ry": self.mass_matrix(y),
                "Rs": self.mass_matrix(s ** (2.0 * beta)),
            }
        return self._components

    def operator_matrices(self, tau: float) -> Tuple[SparseOperator, SparseOperator]:
        """(K(tau), R(tau)) 를 성분 행렬의 선형결합으로 생성."""
        d = self.domain
        eq, rt = d.equity, d.rate
        t = d.T1 - tau
        a = eq.a(t)
        E = math.exp(rt.kappa * t)
        comp = self._component_matrices()

        K = (
            (0.5 * a * a) * comp["K11"]
            + (0.5 * d.rho * rt.delta * a * E) * comp["K12"]
            + (0.5 * rt.delta * rt.delta * E * E) * comp["K22"]
        )
        R = (1.0 / E) * comp["Ry"] + eq.b(t) * self.mass + (eq.c * a * a) * comp["Rs"]
        return K.tocsr(), R.tocsr()

    def lhs(self, tau_next: float, dt: float) -> SparseOperator:
        """M / dt + 1/2 K(tau_next) + 1/2 R(tau_next)."""
        K, R = self.operator_matrices(tau_next)
        return (self.mass / dt + 0.5 * K + 0.5 * R).tocsr()


def assemble_lhs(
    tau_next: float,
    dt: float,
    d: TransformedDomain,
    mesh: FemMesh,
    order: Optional[np.ndarray] = None,
) -> SparseOperator:
    """
    좌변 연산자 직접 조립 (구적점에서 A, l 를 바로 평가)

    Assembler.lhs 와 같은 행렬을 만든다. order 로 요소 방문 순서를 바꿀 수 있다.
    """
    asm = Assembler(mesh, d)
    qp = asm.quad_points
    A = diffusion(tau_next, qp[..., 0], d)
    l_vals = reaction(tau_next, qp[..., 0], qp[..., 1], d)

    wc = A * asm.quad_weights[:, :, None, None]
    stiff = np.einsum("eqij,qbj,qai->eab", wc, asm.dN, asm.dN)
    react = np.einsum("eq,qa,qb->eab", l_vals * asm.quad_weights, asm.N, asm.N)
    mass = np.einsum("eq,qa,qb->eab", asm.quad_weights, asm.N, asm.N)
    return asm.to_sparse(mass / dt + 0.5 * stiff + 0.5 * react, order)
