"""
JDCEV Bond Engine - 부도가능 쿠폰채 가격 계산 서비스

Features:
- Vasicek 금리 + JDCEV 주가 모델
- 특성곡선 Crank-Nicolson + Q2 유한요소 PDE 풀이
- Monte Carlo 교차 검증
- 무위험 할인채 곡선
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api.router import api_router
from app.core.config import settings
from app.core.errors import BondEngineError
from app.core.logging import configure_logging

logger = logging.getLogger(__name__)

# 입력 문제로 보는 범주 (나머지는 수치 실패)
CLIENT_CATEGORIES = {"config", "domain", "out_of_domain", "missing_date", "length_mismatch", "mesh"}


@asynccontextmanager
async def lifespan(app: FastAPI):
    """앱 생명주기 관리."""
    configure_logging()
    logger.info("%s API started (workers=%d)", settings.APP_NAME, settings.WORKERS)
    yield
    logger.info("%s API shutting down", settings.APP_NAME)


app = FastAPI(
    title="JDCEV Bond Engine API",
    description="부도가능 쿠폰채 PDE / Monte Carlo 가격 계산",
    version="1.0.0",
    lifespan=lifespan
)

# CORS 설정
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# 라우터 등록
app.include_router(api_router, prefix="/api/v1")


@app.exception_handler(BondEngineError)
async def engine_error_handler(request: Request, exc: BondEngineError):
    """엔진 예외 -> {"category", "detail"}."""
    status = 422 if exc.category in CLIENT_CATEGORIES else 500
    logger.warning("%s %s failed: %s: %s", request.method, request.url.path, exc.category, exc)
    return JSONResponse(status_code=status, content={"category": exc.category, "detail": str(exc)})


@app.exception_handler(RequestValidationError)
async def validation_error_handler(request: Request, exc: RequestValidationError):
    """요청 본문 검증 실패는 config 범주로 보고."""
    parts = []
    for item in exc.errors():
        loc = [str(p) for p in item["loc"] if p != "body"]
        parts.append(f"{'.'.join(loc) or '<root>'}: {item['msg']}")
    return JSONResponse(status_code=422, content={"category": "config", "detail": "; ".join(parts)})


@app.get("/health")
async def health_check():
    """헬스 체크."""
    return {
        "status": "healthy",
        "service": settings.APP_NAME,
        "version": "1.0.0"
    }


@app.get("/")
async def root():
    """루트 엔드포인트."""
    return {
        "message": "Welcome to JDCEV Bond Engine API",
        "docs": "/docs",
        "health": "/health"
    }
