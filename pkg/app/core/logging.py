"""
JDCEV Bond Engine - Logging
"""

import logging
import sys
from typing import Optional

from app.core.config import settings


def configure_logging(level: Optional[str] = None) -> None:
    """루트 로거 설정. 로그는 stderr 로 보내 stdout 표 출력과 분리."""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )
