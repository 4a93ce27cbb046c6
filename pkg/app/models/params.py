"""
JDCEV Bond Engine - Model Parameters

금융 모델 파라미터 (불변 값 객체)
- Vasicek 단기금리: kappa, theta, delta
- JDCEV 주가/부도강도: a(t)=a1*t+a2, b(t)=b1*t+b2, c, beta
- 시장 상태: S0, r0, rho
- 채권 계약: 액면가, 쿠폰 일정, 회수율

생성 시 검증하며, 실패 메시지에는 위반한 불변식이 명시된다.
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RateParams(_Frozen):
    """Vasicek 단기금리 파라미터 (kappa=0 또는 delta=0 은 검증/퇴화 모드용)."""

    kappa: float = Field(ge=0.0, description="mean-reversion speed, 1/years")
    theta: float = Field(description="long-term mean rate, 1/year")
    delta: float = Field(ge=0.0, description="rate volatility, 1/year^(1/2)")


class EquityParams(_Frozen):
    """JDCEV 변동성 / 부도강도 파라미터."""

    a1: float
    a2: float
    b1: float = 0.0
    b2: float = 0.0
    c: float = Field(ge=0.0, description="hazard sensitivity")
    beta: float = Field(lt=0.0, description="elasticity")

    @model_validator(mode="after")
    def _check_at_origin(self) -> "EquityParams":
        if self.a2 <= 0.0:
            raise ValueError("invariant a(t) > 0 violated at t=0 (a2 must be > 0)")
        if self.b2 < 0.0:
            raise ValueError("invariant b(t) >= 0 violated at t=0 (b2 must be >= 0)")
        return self

    def a(self, t):
        """변동성 스케일 a(t)."""
        return self.a1 * t + self.a2

    def b(self, t):
        """부도강도 기저 b(t)."""
        return self.b1 * t + self.b2

    def check_horizon(self, horizon: float) -> None:
        """[0, horizon] 전체에서 a(t) > 0, b(t) >= 0 확인 (선형이므로 끝점만 보면 된다)."""
        if self.a(horizon) <= 0.0:
            raise ValueError(f"invariant a(t) > 0 violated at t={horizon}")
        if self.b(horizon) < 0.0:
            raise ValueError(f"invariant b(t) >= 0 violated at t={horizon}")

    def without_hazard(self) -> "EquityParams":
        """lambda == 0 변형 (b1=b2=c=0). Vasicek 해석해 검증에 사용."""
        return self.model_copy(update={"b1": 0.0, "b2": 0.0, "c": 0.0})


class MarketState(_Frozen):
    """현재 시장 상태."""

    S0: float = Field(gt=0.0, description="spot stock price")
    r0: float = Field(description="spot short rate, may be negative")
    rho: float = Field(gt=-1.0, lt=1.0, description="Wiener correlation, |rho| < 1")


class BondSpec(_Frozen):
    """
    비상환 부도가능 쿠폰채 계약 조건

    coupon_amounts 는 액면 대비 비율 (0.0125 = 연 1.25%).
    """

    face_value: float = Field(gt=0.0)
    coupon_dates: List[float] = Field(min_length=1)
    coupon_amounts: List[float] = Field(min_length=1)
    recovery: float = Field(ge=0.0, le=1.0)

    @field_validator("coupon_dates")
    @classmethod
    def _dates_increasing(cls, dates: List[float]) -> List[float]:
        if dates[0] <= 0.0:
            raise ValueError("invariant coupon_dates > 0 violated")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("invariant coupon_dates strictly increasing violated")
        return dates

    @model_validator(mode="after")
    def _same_length(self) -> "BondSpec":
        if len(self.coupon_amounts) != len(self.coupon_dates):
            raise ValueError(
                "invariant len(coupon_amounts) == len(coupon_dates) violated "
                f"({len(self.coupon_amounts)} != {len(self.coupon_dates)})"
            )
        return self

    @property
    def maturity(self) -> float:
        return self.coupon_dates[-1]

    @property
    def n_coupons(self) -> int:
        return len(self.coupon_dates)


class TruncationConfig(_Frozen):
    """
    계산 영역 절단 값

    None 이면 localization 의 기본값을 사용한다:
    s_max = 10 * max(1, S0), y_half = max(|r0| e^{kappa T}, |m_T|) + max(6 sd_T, 1e-3)
    (m_T, sd_T: 만기 T 에서 y = r e^{kappa t} 의 평균과 표준편차)
    """

    s_max: Optional[float] = Field(default=None, gt=1.0)
    y_half: Optional[float] = Field(default=None, gt=0.0)


class ModelParams(_Frozen):
    """모델 파라미터 묶음."""

    rate: RateParams
    equity: EquityParams
    market: MarketState

    def without_hazard(self) -> "ModelParams":
        return self.model_copy(update={"equity": self.equity.without_hazard()})
