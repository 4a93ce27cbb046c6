"""
공용 fixture

- UBS / JPM 실행 설정 (configs/*.json)
- 빠른 테스트용 작은 격자 설정
- --runslow 옵션과 slow 마커 (논문 규모 재현 테스트)
"""

from pathlib import Path

import pytest

from app.models.run import RunConfig, load_run_config
from app.services.pde.fem import build_mesh
from app.services.pde.localization import BoundaryData, TransformedDomain, build_domain

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-scale reproduction runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale reproduction run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def ubs_config() -> RunConfig:
    return load_run_config(CONFIG_DIR / "ubs.json")


@pytest.fixture(scope="session")
def jpm_config() -> RunConfig:
    return load_run_config(CONFIG_DIR / "jpm.json")


@pytest.fixture(params=["ubs", "jpm"])
def any_config(request, ubs_config, jpm_config) -> RunConfig:
    return ubs_config if request.param == "ubs" else jpm_config


def make_domain(cfg: RunConfig, horizon: float = None) -> TransformedDomain:
    m = cfg.model
    return build_domain(
        m.equity, m.rate, m.market, horizon or cfg.bond.maturity, cfg.truncation,
        boundary=BoundaryData(cfg.numerics.boundary_data),
    )


@pytest.fixture
def domain_for():
    """설정 -> 계산 영역 생성 함수."""
    return make_domain


@pytest.fixture
def ubs_domain(ubs_config) -> TransformedDomain:
    return make_domain(ubs_config)


@pytest.fixture
def jpm_domain(jpm_config) -> TransformedDomain:
    return make_domain(jpm_config)


@pytest.fixture
def small_mesh(ubs_domain):
    return build_mesh(4, 4, ubs_domain)


@pytest.fixture
def fast_ubs(ubs_config) -> RunConfig:
    """작은 격자 / 적은 스텝 (몇 초 안에 전체 채권 풀이)."""
    return ubs_config.with_numerics(mesh=4, steps_per_year=24)


@pytest.fixture
def fast_jpm(jpm_config) -> RunConfig:
    return jpm_config.with_numerics(mesh=4, steps_per_year=24)
