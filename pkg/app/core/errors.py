"""
JDCEV Bond Engine - Errors

모든 예외는 BondEngineError 에서 파생되며, 기계 판독용 category 를 가진다.
"""

from typing import Optional


class BondEngineError(Exception):
    """엔진 공통 예외."""

    category = "engine"


class ModelDomainError(BondEngineError, ValueError):
    """모델 함수의 정의역 위반 (S <= 0, t2 < t1 등)."""

    category = "domain"


class OutOfDomainError(BondEngineError, ValueError):
    """계산 영역(사각형) 밖의 점."""

    category = "out_of_domain"


class MeshSizeError(BondEngineError, ValueError):
    """잘못된 요소 개수."""

    category = "mesh"


class InconclusiveClassificationError(BondEngineError):
    """Fichera 부호가 한 면 위에서 바뀌는 경우."""

    category = "fichera"


class LinearSolverError(BondEngineError):
    """선형 시스템 풀이 실패 (특이 행렬 / 미수렴)."""

    category = "solver"

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class MissingDateError(BondEngineError, KeyError):
    """쿠폰 날짜에 대한 u1 값이 없음."""

    category = "missing_date"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class LengthMismatchError(BondEngineError, ValueError):
    """사다리꼴 적분 입력 길이 불일치."""

    category = "length_mismatch"


class ConfigError(BondEngineError):
    """실행 설정 검증 실패. 메시지는 실패한 키 경로를 포함."""

    category = "config"
