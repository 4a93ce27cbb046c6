"""
JDCEV Bond Engine - Run Configuration

실행 설정 (JSON)
- model.rate / model.equity / model.market
- bond, truncation, numerics, mc, zcb, output

키 이름 예: model.rate.kappa, bond.coupon_dates, numerics.mesh, mc.seed
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.errors import ConfigError
from app.models.params import BondSpec, ModelParams, TruncationConfig


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class NumericsConfig(_Section):
    """PDE 수치 설정."""

    mesh: int = Field(default=32, ge=1, description="elements per axis (4/8/16/32 ladder)")
    steps_per_year: int = Field(default=360, ge=1)
    solver: Literal["direct", "krylov"] = "direct"
    krylov_rtol: float = Field(default=1e-10, gt=0.0)
    boundary_data: Literal["affine", "frozen"] = Field(
        default="affine", description="Gamma1- Dirichlet data: Vasicek affine or frozen-rate"
    )


class McConfig(_Section):
    """Monte Carlo 설정."""

    n_paths: int = Field(default=100000, ge=2)
    dt: float = Field(default=1.0 / 360.0, gt=0.0)
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    antithetic: bool = False


class ZcbConfig(_Section):
    """무위험 할인채 곡선 설정 (market 은 만기 문자열 -> 시장가)."""

    maturities: List[float] = Field(default_factory=lambda: [float(k) for k in range(1, 11)])
    market: Dict[str, float] = Field(default_factory=dict)


class OutputConfig(_Section):
    result_path: Optional[str] = None
    surface_path: Optional[str] = None


class RunConfig(_Section):
    """실행 설정 전체."""

    model: ModelParams
    bond: BondSpec
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    mc: McConfig = Field(default_factory=McConfig)
    zcb: ZcbConfig = Field(default_factory=ZcbConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _check_horizon(self) -> "RunConfig":
        self.model.equity.check_horizon(self.bond.maturity)
        return self

    def with_numerics(self, **changes) -> "RunConfig":
        """numerics 일부만 바꾼 사본 (바뀐 값도 검증)."""
        try:
            numerics = NumericsConfig.model_validate({**self.numerics.model_dump(), **changes})
        except ValidationError as e:
            raise ConfigError("numerics." + _format_errors(e)) from e
        return self.model_copy(update={"numerics": numerics})

    def without_hazard(self) -> "RunConfig":
        return self.model_copy(update={"model": self.model.without_hazard()})


def _format_errors(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        path = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{path}: {item['msg']}")
    return "; ".join(parts)


def parse_run_config(raw: Union[str, bytes, dict]) -> RunConfig:
    """JSON 문자열 또는 dict -> RunConfig. 실패 시 키 경로가 담긴 ConfigError."""
    try:
        if isinstance(raw, dict):
            return RunConfig.model_validate(raw)
        return RunConfig.model_validate_json(raw)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """설정 파일 읽기."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_run_config(text)


def dump_run_config(cfg: RunConfig) -> str:
    """설정 JSON 직렬화 (다시 읽으면 같은 설정)."""
    return cfg.model_dump_json(indent=2)
