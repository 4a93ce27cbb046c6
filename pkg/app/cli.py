"""
JDCEV Bond Engine - Command Line

설정 파일 기반 명령행 도구
- price   : 채권가 (--sweep 이면 격자 x 시간 수렴표)
- zcb     : 무위험 할인채 곡선 (PDE / 해석해 / 시장가)
- mc      : Monte Carlo 채권가와 95% 신뢰구간
- compare : PDE 값과 Monte Carlo 신뢰구간 비교
- surface : 절점별 (S, r, value) CSV

표는 stdout 에 유효숫자 9자리로 출력하고 로그는 stderr 로 보낸다.
실패 시 stderr 에 "error: <category>: <message>" 한 줄, 종료 코드 2 (설정) / 3 (수치) / 4 (I/O).

사용 예:
    python -m app.cli price --config configs/ubs.json --sweep
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from app.core.config import settings
from app.core.errors import BondEngineError
from app.core.logging import configure_logging
from app.models.run import RunConfig, dump_run_config, load_run_config
from app.services.montecarlo.oracle import estimate_bond
from app.services.pricing import bond as bond_pricer

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

DEFAULT_SURFACE_PATH = "surface.csv"


def fmt(value: Optional[float]) -> str:
    """표 출력 정밀도 (유효숫자 9자리)."""
    return "-" if value is None else f"{value:.9g}"


def _print_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)))


def _write_json(path: Optional[str], payload: Dict[str, Any]) -> None:
    if not path:
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    logger.info("Wrote %s", target)


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config)
    changes = {}
    if args.mesh is not None:
        changes["mesh"] = args.mesh
    if args.steps_per_year is not None:
        changes["steps_per_year"] = args.steps_per_year
    return cfg.with_numerics(**changes) if changes else cfg


# ============================================================
# 명령
# ============================================================

def cmd_price(cfg: RunConfig, args: argparse.Namespace) -> int:
    """채권가 또는 수렴표."""
    out = args.out or cfg.output.result_path
    if args.sweep:
        result = bond_pricer.sweep(cfg.bond, cfg)
        header = ["steps/year"] + [f"Mesh {n}" for n in result.meshes]
        rows = [[str(s)] + [fmt(result.table[s][n]) for n in result.meshes] for s in result.steps]
        _print_table(header, rows)
        _write_json(out, {"command": "price", "sweep": result.as_dict()})
        return 0

    result = bond_pricer.price(cfg.bond, cfg)
    rows = [
        ["u1", fmt(t), fmt(v)] for t, v in sorted(result.u1_values.items())
    ] + [
        ["u2", fmt(t), fmt(v)] for t, v in sorted(result.u2_values.items())
    ]
    _print_table(["field", "date", "value"], rows)
    print(f"integral term: {fmt(result.integral_term)}")
    print(f"bond value: {fmt(result.bond_value)}")
    _write_json(out, {"command": "price", **result.as_dict()})
    return 0


def cmd_zcb(cfg: RunConfig, args: argparse.Namespace) -> int:
    """할인채 곡선 표."""
    rows = bond_pricer.zcb_curve(cfg.zcb.maturities, cfg)
    _print_table(
        ["maturity", "model", "analytic", "market", "model-market"],
        [[fmt(r.maturity), fmt(r.model), fmt(r.analytic), fmt(r.market), fmt(r.difference)] for r in rows],
    )
    _write_json(args.out or cfg.output.result_path, {"command": "zcb", "rows": [r.as_dict() for r in rows]})
    return 0


def cmd_mc(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Monte Carlo 추정."""
    estimate = estimate_bond(cfg.bond, cfg)
    lo, hi = estimate.ci95
    _print_table(
        ["paths", "mean", "std_error", "ci95_low", "ci95_high"],
        [[str(estimate.n_paths), fmt(estimate.mean), fmt(estimate.std_error), fmt(lo), fmt(hi)]],
    )
    _write_json(args.out or cfg.output.result_path, {"command": "mc", **estimate.as_dict()})
    return 0


def cmd_compare(cfg: RunConfig, args: argparse.Namespace) -> int:
    """PDE 값이 Monte Carlo 95% 신뢰구간 안에 있는지 보고."""
    pde = bond_pricer.price(cfg.bond, cfg)
    estimate = estimate_bond(cfg.bond, cfg)
    lo, hi = estimate.ci95
    inside = estimate.contains(pde.bond_value)
    _print_table(
        ["pde", "mc_mean", "ci95_low", "ci95_high", "contained"],
        [[fmt(pde.bond_value), fmt(estimate.mean), fmt(lo), fmt(hi), "yes" if inside else "no"]],
    )
    if not inside:
        logger.warning("PDE value %.9g outside Monte Carlo 95%% CI [%.9g, %.9g]", pde.bond_value, lo, hi)
    _write_json(
        args.out or cfg.output.result_path,
        {"command": "compare", "pde": pde.bond_value, "mc": estimate.as_dict(), "contained": inside},
    )
    return 0


def write_surface_csv(path: Path, S: Sequence[float], r: Sequence[float], values: Sequence[float]) -> None:
    """헤더 "S,r,value", 절점 순서 그대로. 다시 읽으면 같은 값이 되도록 17자리로 기록."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["S", "r", "value"])
        for s, rr, v in zip(S, r, values):
            writer.writerow([format(float(s), ".17g"), format(float(rr), ".17g"), format(float(v), ".17g")])


def read_surface_csv(path: Path) -> List[List[float]]:
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        next(reader)
        return [[float(c) for c in row] for row in reader]


def cmd_surface(cfg: RunConfig, args: argparse.Namespace) -> int:
    """절점별 채권가 곡면 CSV."""
    result = bond_pricer.surface(cfg.bond, cfg)
    path = Path(args.out or cfg.output.surface_path or DEFAULT_SURFACE_PATH)
    write_surface_csv(path, result.S, result.r, result.values)
    print(f"wrote {result.values.shape[0]} nodes to {path}")
    return 0


COMMANDS = {
    "price": cmd_price,
    "zcb": cmd_zcb,
    "mc": cmd_mc,
    "compare": cmd_compare,
    "surface": cmd_surface,
}


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="jdcev-bond",
        description="Defaultable coupon bond pricing under Vasicek rates and JDCEV equity.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=settings.DEFAULT_CONFIG, help="run configuration (JSON)")
    parser.add_argument("--sweep", action="store_true", help="price: mesh x steps/year table")
    parser.add_argument("--mesh", type=int, help="override numerics.mesh")
    parser.add_argument("--steps-per-year", dest="steps_per_year", type=int, help="override numerics.steps_per_year")
    parser.add_argument("--out", help="result file (JSON, or CSV for surface)")
    parser.add_argument("--dump-config", dest="dump_config", action="store_true", help="print the effective config and exit")
    parser.add_argument("--log-level", dest="log_level", help="override LOG_LEVEL")
    return parser.parse_args(argv)


def _exit_code(error: BondEngineError) -> int:
    return EXIT_CONFIG if error.category == "config" else EXIT_NUMERICAL


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    configure_logging(args.log_level)
    try:
        cfg = _load(args)
        if args.dump_config:
            print(dump_run_config(cfg))
            return 0
        return COMMANDS[args.command](cfg, args)
    except BondEngineError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return _exit_code(e)
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
