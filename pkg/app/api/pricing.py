"""
JDCEV Bond Engine - Pricing API

가격 계산 엔드포인트
- 채권가 (PDE)
- 무위험 할인채 곡선
- Monte Carlo 추정
- Fichera 경계 분류
- 기본 실행 설정
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

from fastapi import APIRouter
from pydantic import BaseModel

from app.core.config import settings
from app.models.run import RunConfig, load_run_config
from app.services.montecarlo.oracle import estimate_bond
from app.services.pde.localization import build_domain, fichera_classify
from app.services.pricing import bond as bond_pricer

logger = logging.getLogger(__name__)

router = APIRouter()


class PriceResponse(BaseModel):
    """채권가 응답."""
    bond_value: float
    u1_values: Dict[str, float]
    u2_values: Dict[str, float]
    integral_term: float
    diagnostics: Dict[str, Any]


class ZcbRowResponse(BaseModel):
    maturity: float
    model: float
    analytic: float
    market: Optional[float] = None
    difference: Optional[float] = None


class McResponse(BaseModel):
    """Monte Carlo 응답."""
    mean: float
    std_error: float
    ci95: Tuple[float, float]
    n_paths: int


class FicheraResponse(BaseModel):
    faces: Dict[str, str]
    needs_data: List[str]


@router.post("/price", response_model=PriceResponse)
def price_bond(cfg: RunConfig):
    """
    채권가 계산

    쿠폰 날짜마다 u1, 균등 격자 위에서 u2 를 풀어 채권가를 조립합니다.
    """
    result = bond_pricer.price(cfg.bond, cfg)
    logger.info("Priced bond (mesh=%d): %.9g", cfg.numerics.mesh, result.bond_value)
    return PriceResponse(**result.as_dict())


@router.post("/zcb", response_model=List[ZcbRowResponse])
def zcb_curve(cfg: RunConfig):
    """무위험 할인채 곡선 (PDE / 해석해 / 시장가)."""
    rows = bond_pricer.zcb_curve(cfg.zcb.maturities, cfg)
    return [ZcbRowResponse(**row.as_dict()) for row in rows]


@router.post("/mc", response_model=McResponse)
def monte_carlo(cfg: RunConfig):
    """Monte Carlo 채권가 추정."""
    estimate = estimate_bond(cfg.bond, cfg)
    return McResponse(
        mean=estimate.mean,
        std_error=estimate.std_error,
        ci95=estimate.ci95,
        n_paths=estimate.n_paths,
    )


@router.post("/fichera", response_model=FicheraResponse)
def fichera(cfg: RunConfig):
    """경계면별 Fichera 분류."""
    m = cfg.model
    d = build_domain(m.equity, m.rate, m.market, cfg.bond.maturity, cfg.truncation)
    classification = fichera_classify(d)
    faces = classification.as_dict()
    return FicheraResponse(
        faces=faces,
        needs_data=sorted(face.value for face in classification.faces if classification.needs_data(face)),
    )


@router.get("/defaults", response_model=RunConfig)
def defaults():
    """기본 실행 설정 (settings.DEFAULT_CONFIG)."""
    return load_run_config(settings.DEFAULT_CONFIG)
