"""파라미터 / 실행 설정 검증 테스트."""

import json

import pytest
from pydantic import ValidationError

from app.core.errors import ConfigError
from app.models.params import BondSpec, EquityParams, MarketState, RateParams
from app.models.run import dump_run_config, load_run_config, parse_run_config


def test_rate_params_reject_negative_kappa():
    with pytest.raises(ValidationError):
        RateParams(kappa=-0.1, theta=0.02, delta=0.01)


def test_equity_requires_negative_beta():
    with pytest.raises(ValidationError):
        EquityParams(a1=0.0, a2=0.2, c=0.1, beta=0.0)


def test_equity_requires_positive_a_at_origin():
    with pytest.raises(ValidationError, match="a2 must be > 0"):
        EquityParams(a1=0.1, a2=0.0, c=0.1, beta=-0.5)


def test_equity_horizon_check():
    p = EquityParams(a1=-0.1, a2=0.2, c=0.1, beta=-0.5)
    p.check_horizon(1.0)
    with pytest.raises(ValueError, match="a\\(t\\) > 0"):
        p.check_horizon(3.0)


def test_without_hazard_zeroes_hazard_terms():
    p = EquityParams(a1=0.01, a2=0.2, b1=0.01, b2=0.02, c=0.3, beta=-0.5).without_hazard()
    assert (p.b1, p.b2, p.c) == (0.0, 0.0, 0.0)
    assert p.a2 == 0.2


def test_market_rho_bounds():
    with pytest.raises(ValidationError):
        MarketState(S0=1.0, r0=0.0, rho=1.0)


def test_bond_dates_must_increase():
    with pytest.raises(ValidationError, match="strictly increasing"):
        BondSpec(face_value=100.0, coupon_dates=[1.0, 1.0], coupon_amounts=[0.01, 0.01], recovery=0.4)


def test_bond_lengths_must_match():
    with pytest.raises(ValidationError, match="len\\(coupon_amounts\\)"):
        BondSpec(face_value=100.0, coupon_dates=[1.0, 2.0], coupon_amounts=[0.01], recovery=0.4)


def test_bond_maturity_is_last_date():
    spec = BondSpec(face_value=100.0, coupon_dates=[0.5, 1.0, 1.5], coupon_amounts=[0.01] * 3, recovery=0.4)
    assert spec.maturity == 1.5
    assert spec.n_coupons == 3


def test_shipped_configs_transcribe_parameters(ubs_config, jpm_config):
    assert ubs_config.model.market.r0 == -0.009159871729892612
    assert ubs_config.model.market.rho == 0.0
    assert jpm_config.model.market.rho == 0.497108
    assert jpm_config.bond.coupon_amounts == [0.0325] * 5
    assert ubs_config.bond.maturity == 5.0


def test_dump_config_round_trip(any_config):
    assert parse_run_config(dump_run_config(any_config)) == any_config


def test_config_error_lists_key_path(ubs_config):
    raw = json.loads(dump_run_config(ubs_config))
    raw["model"]["rate"]["kappa"] = -1.0
    with pytest.raises(ConfigError, match="model.rate.kappa"):
        parse_run_config(raw)


def test_config_rejects_unknown_keys(ubs_config):
    raw = json.loads(dump_run_config(ubs_config))
    raw["numerics"]["meshes"] = 8
    with pytest.raises(ConfigError, match="numerics.meshes"):
        parse_run_config(raw)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_run_config(tmp_path / "missing.json")


def test_with_numerics_validates(ubs_config):
    assert ubs_config.with_numerics(mesh=8).numerics.mesh == 8
    with pytest.raises(ConfigError, match="numerics.mesh"):
        ubs_config.with_numerics(mesh=0)


def test_boundary_data_option_is_validated(ubs_config):
    assert ubs_config.numerics.boundary_data == "affine"
    assert ubs_config.with_numerics(boundary_data="frozen").numerics.boundary_data == "frozen"
    with pytest.raises(ConfigError, match="boundary_data"):
        ubs_config.with_numerics(boundary_data="linear")
