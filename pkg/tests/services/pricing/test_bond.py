"""채권가 조립 테스트."""

import os

import numpy as np
import pytest

from app.core.config import Settings, settings
from app.core.errors import LengthMismatchError, MissingDateError
from app.models.params import BondSpec
from app.services.model.core import vasicek_zcb
from app.services.pricing import bond as bond_pricer
from app.services.pricing.bond import (
    SolveTask,
    bond_value,
    price,
    price_u1,
    price_u2,
    solve_all,
    surface,
    sweep,
    trapezoid_integral,
    u2_dates,
    zcb_curve,
)
from app.services.pde.fem import build_mesh, interpolate
from app.services.pde.localization import ProblemKind, to_computational

SPEC = BondSpec(
    face_value=100.0,
    coupon_dates=[1.0, 2.0, 3.0, 4.0, 5.0],
    coupon_amounts=[0.0125] * 5,
    recovery=0.4,
)
ONES = {t: 1.0 for t in SPEC.coupon_dates}


def test_trapezoid_constant():
    assert trapezoid_integral([2.0] * 6, 1.0, 5) == pytest.approx(10.0)


def test_trapezoid_exact_on_linear():
    h = 0.5
    values = [j * h for j in range(9)]
    assert trapezoid_integral(values, h, 8) == pytest.approx(8.0)


def test_trapezoid_length_mismatch():
    with pytest.raises(LengthMismatchError):
        trapezoid_integral([1.0, 2.0, 3.0], 1.0, 5)
    with pytest.raises(LengthMismatchError):
        trapezoid_integral([1.0], 1.0)


def test_bond_value_riskless():
    assert bond_value(SPEC, ONES, integral=0.0) == pytest.approx(100.0 * (1.0 + 0.0625))


def test_bond_value_without_recovery():
    spec = SPEC.model_copy(update={"recovery": 0.0})
    u1 = {1.0: 0.99, 2.0: 0.97, 3.0: 0.95, 4.0: 0.93, 5.0: 0.9}
    expected = 100.0 * (0.0125 * sum(u1.values()) + 0.9)
    assert bond_value(spec, u1, integral=0.3) == pytest.approx(expected)


def test_bond_value_monotone_in_recovery():
    u1 = {t: 0.9 for t in SPEC.coupon_dates}
    low = bond_value(SPEC.model_copy(update={"recovery": 0.2}), u1, integral=0.05)
    high = bond_value(SPEC.model_copy(update={"recovery": 0.6}), u1, integral=0.05)
    assert high > low


def test_bond_value_linear_in_face_value():
    u1 = {t: 0.95 for t in SPEC.coupon_dates}
    doubled = SPEC.model_copy(update={"face_value": 200.0})
    assert bond_value(doubled, u1, integral=0.02) == pytest.approx(2.0 * bond_value(SPEC, u1, integral=0.02))


def test_bond_value_missing_date():
    with pytest.raises(MissingDateError, match="3.0"):
        bond_value(SPEC, {1.0: 1.0, 2.0: 1.0, 4.0: 1.0, 5.0: 1.0}, integral=0.0)


def test_bond_value_from_u2_map():
    u2 = {t: 0.01 for t in u2_dates(SPEC)}
    assert bond_value(SPEC, ONES, u2) == pytest.approx(bond_value(SPEC, ONES, integral=0.05))


def test_u2_dates_are_uniform():
    spec = BondSpec(face_value=100.0, coupon_dates=[0.5, 2.0, 3.0], coupon_amounts=[0.01] * 3, recovery=0.4)
    assert u2_dates(spec) == pytest.approx([0.0, 1.0, 2.0, 3.0])


def test_price_u2_at_zero_is_spot_rate(ubs_config):
    assert price_u2(0.0, ubs_config) == ubs_config.model.market.r0


def test_price_u1_at_zero_is_one(ubs_config):
    assert price_u1(0.0, ubs_config) == 1.0


def test_price_pipeline(fast_ubs):
    result = price(fast_ubs.bond, fast_ubs)
    assert set(result.u1_values) == set(fast_ubs.bond.coupon_dates)
    assert sorted(result.u2_values) == pytest.approx([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    assert result.u2_values[0.0] == fast_ubs.model.market.r0
    # 생존확률 <= 1 이므로 u1 은 무위험 할인채 가격을 넘지 않는다
    market = fast_ubs.model.market
    for t, v in result.u1_values.items():
        assert 0.0 < v <= vasicek_zcb(market.r0, t, fast_ubs.model.rate) + 1e-2

    recomputed = trapezoid_integral([result.u2_values[t] for t in sorted(result.u2_values)], 1.0, 5)
    assert result.integral_term == recomputed
    assert result.bond_value == pytest.approx(bond_value(fast_ubs.bond, result.u1_values, integral=recomputed))
    assert 95.0 < result.bond_value < 110.0

    diag = result.diagnostics
    assert diag["nodes"] == 81
    assert diag["boundary_data"] == "affine"
    assert len(diag["solves"]) == 10
    assert diag["elapsed_seconds"] >= 0.0


def test_price_u1_matches_pipeline(fast_ubs):
    result = price(fast_ubs.bond, fast_ubs)
    assert price_u1(2.0, fast_ubs) == pytest.approx(result.u1_values[2.0], abs=1e-12)


def test_zero_coupon_hazard_free_bond_is_vasicek(ubs_config):
    cfg = ubs_config.without_hazard().with_numerics(mesh=8, steps_per_year=90)
    spec = BondSpec(face_value=100.0, coupon_dates=[2.0], coupon_amounts=[0.0], recovery=0.0)
    result = price(spec, cfg)
    market = cfg.model.market
    expected = 100.0 * vasicek_zcb(market.r0, 2.0, cfg.model.rate)
    assert result.bond_value == pytest.approx(expected, abs=1e-3 * spec.face_value)


def test_zcb_curve_rows(ubs_config):
    cfg = ubs_config.with_numerics(mesh=4, steps_per_year=24)
    rows = zcb_curve([0.0, 1.0, 2.0], cfg)
    assert rows[0].model == 1.0
    assert rows[0].analytic == pytest.approx(1.0)
    assert rows[1].market == 1.00229
    assert rows[1].difference == pytest.approx(rows[1].model - 1.00229)
    assert rows[1].analytic == pytest.approx(1.006751, abs=5e-6)
    for row in rows[1:]:
        assert row.model == pytest.approx(row.analytic, abs=5e-3)


def test_zcb_curve_does_not_depend_on_requested_subset(ubs_config):
    cfg = ubs_config.with_numerics(mesh=4, steps_per_year=24)
    full = zcb_curve(cfg.zcb.maturities, cfg)
    single = zcb_curve([1.0], cfg)
    assert single[0].model == pytest.approx(full[0].model, abs=1e-12)


def test_surface_interpolates_to_spot_price(fast_ubs, domain_for):
    result = price(fast_ubs.bond, fast_ubs)
    surf = surface(fast_ubs.bond, fast_ubs)
    assert surf.values.shape == (81,)
    assert surf.mesh["nodes"] == 81

    d = domain_for(fast_ubs)
    mesh = build_mesh(4, 4, d)
    market = fast_ubs.model.market
    point = np.array(to_computational(market.S0, market.r0, 0.0, d))
    assert interpolate(surf.values, point, mesh) == pytest.approx(result.bond_value, abs=1e-9)


def test_sweep_table_layout(ubs_config, monkeypatch):
    calls = []

    def fake_price(spec, cfg):
        calls.append((cfg.numerics.steps_per_year, cfg.numerics.mesh))
        return bond_pricer.PricingResult(
            bond_value=100.0 + 1.0 / cfg.numerics.mesh, u1_values={}, u2_values={}, integral_term=0.0
        )

    monkeypatch.setattr(bond_pricer, "price", fake_price)
    result = sweep(ubs_config.bond, ubs_config, meshes=(4, 8, 16), steps=(90, 180))
    assert calls == [(90, 4), (90, 8), (90, 16), (180, 4), (180, 8), (180, 16)]
    assert result.table[180][8] == pytest.approx(100.125)
    diffs = result.mesh_differences(90)
    assert diffs == pytest.approx([0.125, 0.0625])
    assert result.step_differences(4) == pytest.approx([0.0])


def test_parallel_solves_match_serial(fast_ubs, monkeypatch):
    tasks = [SolveTask(ProblemKind.U1, 1.0), SolveTask(ProblemKind.U2, 1.0), SolveTask(ProblemKind.U1, 2.0)]
    monkeypatch.setattr(settings, "WORKERS", 1)
    serial = solve_all(tasks, fast_ubs, 5.0)
    monkeypatch.setattr(settings, "WORKERS", 2)
    parallel = solve_all(tasks, fast_ubs, 5.0)
    for task in tasks:
        np.testing.assert_array_equal(parallel[task].values, serial[task].values)


def test_workers_default_to_cpu_count(monkeypatch):
    monkeypatch.delenv("WORKERS", raising=False)
    assert Settings(_env_file=None).WORKERS == (os.cpu_count() or 1)


def test_boundary_data_option_reaches_solver(fast_ubs):
    frozen = fast_ubs.with_numerics(boundary_data="frozen")
    assert price(frozen.bond, frozen).diagnostics["boundary_data"] == "frozen"
    assert price_u1(3.0, frozen) != price_u1(3.0, fast_ubs)
