"""Command-line entry point: ``ofdmim simulate | map-demo | bounds``."""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    MonteCarloConfig,
    check_bounds,
    read_csv,
    summaries_from_rows,
    sweep,
    write_csv,
)
from .detectors import FALLBACK_POLICIES
from .mapping import InvalidParameterError, derive_params, illegal_ratio, index_to_sap

log = logging.getLogger("ofdmim")

PRESETS = {
    "fig2": {"N": 128, "n": 8, "k": 4, "M": 4},
    "fig3": {"N": 100, "n": 10, "k": 5, "M": 4},
}
MAP_DEMO_ROWS = 256

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_BOUNDS = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    # a run manifest carries the full config under "config"
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    known = {f.name for f in dataclasses.fields(MonteCarloConfig)}
    unknown = set(data) - known - {"preset"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def _snr_grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0:
        raise ConfigError("--snr-step must be positive")
    if hi < lo:
        raise ConfigError("--snr-max must be >= --snr-min")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(count)]


def build_config(args) -> MonteCarloConfig:
    """Defaults < preset < config file < command-line flags."""
    values: dict = {}
    file_values = _load_config_file(args.config) if args.config else {}
    preset = args.preset or file_values.pop("preset", None)
    if preset:
        values.update(PRESETS[preset])
    values.update(file_values)
    if args.seed is not None:
        values["master_seed"] = args.seed
    if args.trials is not None:
        values["trials_per_point"] = args.trials
    if args.workers is not None:
        values["workers"] = args.workers
    if getattr(args, "sigma2", None) is not None:
        values["sigma2_override"] = args.sigma2
    if getattr(args, "fallback", None) is not None:
        values["fallback_policy"] = args.fallback
    if getattr(args, "snr_mode", None) is not None:
        values["snr_mode"] = args.snr_mode
    if getattr(args, "snr", None) is not None:
        values["snr_grid_db"] = [args.snr]
    if any(v is not None for v in (args.snr_min, args.snr_max, args.snr_step)):
        base = list(values.get("snr_grid_db", MonteCarloConfig.snr_grid_db))
        lo = args.snr_min if args.snr_min is not None else base[0]
        hi = args.snr_max if args.snr_max is not None else base[-1]
        step = args.snr_step if args.snr_step is not None else 5.0
        values["snr_grid_db"] = _snr_grid(lo, hi, step)
    try:
        return MonteCarloConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _config_hash(cfg_dict: dict) -> str:
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _manifest(cfg: MonteCarloConfig) -> dict:
    d = cfg.to_dict()
    return {
        "config": d,
        "config_sha256": _config_hash(d),
        "master_seed": cfg.master_seed,
        "versions": {
            "ofdmim": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }


def _bound_payload(reports, cfg_like: dict) -> dict:
    return {
        "r": reports[0].r if reports else None,
        "n": cfg_like["n"],
        "k": cfg_like["k"],
        "passed": all(rep.passed for rep in reports),
        "points": [rep.to_dict() for rep in reports],
    }


def _print_table(rows) -> None:
    print(f"{'snr_db':>7} {'detector':>8} {'ber':>12} {'sap_err':>12} {'omega_i':>10} {'omega_ii':>10}")
    for row in rows:
        print(f"{row['snr_db']:7.2f} {row['detector']:>8} {row['ber']:12.4e} "
              f"{row['sap_err']:12.4e} {row['omega_i']:10.3e} {row['omega_ii']:10.3e}")


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("simulating N=%d n=%d k=%d over %d SNR points, %d trials each",
             cfg.N, cfg.n, cfg.k, len(cfg.snr_grid_db), cfg.trials_per_point)
    rows, tallies = sweep(cfg)
    reports = [check_bounds(t, cfg.params, snr) for snr, t in zip(cfg.snr_grid_db, tallies)]
    write_csv(rows, out / "results.csv")
    payload = _bound_payload(reports, cfg.to_dict())
    (out / "bounds.json").write_text(json.dumps(payload, indent=2) + "\n")
    (out / "manifest.json").write_text(json.dumps(_manifest(cfg), indent=2) + "\n")
    if not args.quiet:
        _print_table(rows)
        print(f"r = {payload['r']!r}")
    failed = [(rep.snr_db, c.name) for rep in reports for c in rep.checks if not c.passed]
    for snr, name in failed:
        log.warning("bound check %s failed at %s dB", name, snr)
    if failed and args.strict:
        return EXIT_BOUNDS
    return EXIT_OK


def cmd_map_demo(args) -> int:
    params = derive_params(args.n, args.k, args.M)
    r = illegal_ratio(params)
    print(f"n={params.n} k={params.k} M={params.M} p1={params.p1} p2={params.p2} "
          f"nCk={params.nCk} legal={params.n_legal} r={r:.4f}")
    shown = min(params.nCk, MAP_DEMO_ROWS)
    for rank in range(shown):
        sap = index_to_sap(rank, params)
        flag = "legal" if rank < params.n_legal else "illegal"
        bits = format(rank, f"0{params.p1}b") if rank < params.n_legal else "-"
        print(f"{rank:6d}  {bits:>{max(params.p1, 1)}}  {{{','.join(map(str, sap.indices))}}}  {flag}")
    if params.nCk > shown:
        print(f"... {params.nCk - shown} more patterns not shown")
    return EXIT_OK


def cmd_bounds(args) -> int:
    csv_path = Path(args.results)
    if args.config or args.preset:
        cfg = build_config(args)
        cfg_like = cfg.to_dict()
    else:
        manifest = Path(args.manifest) if args.manifest else csv_path.with_name("manifest.json")
        if not manifest.exists():
            raise ConfigError(f"no --preset/--config given and {manifest} does not exist")
        cfg_like = _load_config_file(str(manifest))
        cfg_like = MonteCarloConfig(**cfg_like).to_dict()
    params = derive_params(cfg_like["n"], cfg_like["k"], cfg_like["M"])
    G = cfg_like["N"] // cfg_like["n"]
    rows = read_csv(csv_path)
    reports = [check_bounds(s, params, snr) for snr, s in summaries_from_rows(rows, G)]
    payload = _bound_payload(reports, cfg_like)
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if not payload["passed"]:
        log.warning("bound checks failed")
        if args.strict:
            return EXIT_BOUNDS
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="JSON config file or a previous run manifest")
    p.add_argument("--seed", type=int, help="master seed (64-bit)")
    p.add_argument("--trials", type=int, help="frames per SNR point")
    p.add_argument("--snr", type=float, help="single SNR point in dB")
    p.add_argument("--snr-min", type=float)
    p.add_argument("--snr-max", type=float)
    p.add_argument("--snr-step", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--strict", action="store_true", help="exit nonzero when a bound check fails")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ofdmim", description="OFDM-IM detector simulations")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a BER / outcome sweep")
    _add_run_flags(sim)
    sim.add_argument("--sigma2", type=float, help="fixed per-dimension noise variance (overrides SNR)")
    sim.add_argument("--fallback", choices=FALLBACK_POLICIES)
    sim.add_argument("--snr-mode", choices=("es", "eb"))
    sim.add_argument("--out", default="results", help="output directory")
    sim.add_argument("-q", "--quiet", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    demo = sub.add_parser("map-demo", help="print the rank -> pattern table")
    demo.add_argument("n", type=int)
    demo.add_argument("k", type=int)
    demo.add_argument("M", type=int, nargs="?", default=4)
    demo.set_defaults(func=cmd_map_demo)

    bnd = sub.add_parser("bounds", help="re-check bounds on a saved results.csv")
    bnd.add_argument("results")
    _add_run_flags(bnd)
    bnd.add_argument("--manifest", help="run manifest (default: manifest.json beside the CSV)")
    bnd.add_argument("--out", help="write the JSON report here instead of stdout")
    bnd.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"ofdmim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ofdmim: I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
