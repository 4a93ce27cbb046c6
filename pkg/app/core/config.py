"""
JDCEV Bond Engine - Configuration

프로세스 단위 설정 (환경변수 / .env)
- 로깅 레벨
- 병렬 작업자 수
- HTTP 표면 설정
"""

import os
from typing import List

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """애플리케이션 설정."""

    # App
    APP_NAME: str = "JDCEV Bond Engine"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Parallelism (기본값: CPU 수, 1 = 직렬 실행)
    WORKERS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    MC_BLOCK_SIZE: int = 10000

    # 기본 실행 설정 파일
    DEFAULT_CONFIG: str = "configs/ubs.json"

    # CORS
    CORS_ORIGINS: List[str] = ["http://localhost:3000", "http://localhost:5173"]

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
