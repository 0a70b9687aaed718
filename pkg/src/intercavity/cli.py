"""Command line: ``intercavity {validate,run,sweep,fig3,fig4}``.

Exit status is 0 on success, 1 when a regime check fails or any row did not
converge, and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from itertools import product

from .config import ConfigError, RunConfig, load_config
from .model import validate_regime
from .protocol import Model
from .sweep import (CSV_COLUMNS, SweepSpec, build_result, emit_outputs, fig3_config,
                    fig4_config, point_row, run_point, run_sweep)

logger = logging.getLogger("intercavity")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="INI configuration file")
    p.add_argument("--out", metavar="PREFIX", help="output path prefix")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p.add_argument("--dt-ps", type=float, metavar="REAL", help="upper bound on the RK4 step")
    p.add_argument("--truncation", type=int, metavar="N", help="Fock levels per cavity (>= 3)")
    p.add_argument("--model", choices=[m.value for m in Model])
    p.add_argument("--override-regime-check", action="store_true",
                   help="run even when the dispersive-regime checks fail")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intercavity",
                                     description="Virtual-photon intercavity protocol simulator")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("validate", "print the regime report"),
                            ("run", "single protocol run"),
                            ("sweep", "grid sweep from the [sweep] section"),
                            ("fig3", "entanglement fidelity vs b for five crosstalk values"),
                            ("fig4", "transfer fidelity over (b, alpha)")):
        p = sub.add_parser(verb, help=help_text)
        _common(p)
        if verb in ("validate", "run"):
            p.add_argument("--b", type=float, help="normalised detuning |delta1|/g1")
            p.add_argument("--g12-fraction", type=float, help="crosstalk as a fraction of g_max")
        if verb == "run":
            p.add_argument("--protocol", choices=["entanglement", "transfer"])
            p.add_argument("--alpha", type=float, help="real amplitude of |0> for transfer")
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    base = cfg.base
    if getattr(args, "b", None) is not None:
        base = replace(base, b=args.b)
    if getattr(args, "g12_fraction", None) is not None:
        base = replace(base, g12_fraction=args.g12_fraction)
    try:
        return cfg.with_overrides(
            base=base,
            kind=getattr(args, "protocol", None),
            alpha=getattr(args, "alpha", None),
            model=args.model,
            override_regime=True if args.override_regime_check else None,
            dt=None if args.dt_ps is None else args.dt_ps * 1e-3,
            truncation=args.truncation,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _validate(cfg: RunConfig) -> int:
    points = [(cfg.base.b, cfg.base.g12_fraction)]
    points += [p for p in product(cfg.b_grid, cfg.g12_grid) if p not in points]
    ok = True
    for b, g12 in points:
        report = validate_regime(cfg.base.params(b, g12), cfg.settings.regime_threshold)
        print(f"b = {b!r}, g12_fraction = {g12!r}")
        print(report.format())
        ok &= report.passed
    return 0 if ok else 1


def _print_rows(rows) -> None:
    writer = csv.DictWriter(sys.stdout, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def _run(cfg: RunConfig, args) -> int:
    b, g12 = cfg.base.b, cfg.base.g12_fraction
    alpha = cfg.alpha if cfg.kind == "transfer" else None
    started = time.time()
    t0 = time.perf_counter()
    run = run_point(cfg, b, g12, alpha)
    row = point_row(cfg, b, g12, alpha, run)
    _print_rows([row])
    if args.out:
        single = replace(cfg, b_grid=(b,), g12_grid=(g12,),
                         alpha_grid=() if alpha is None else (alpha,))
        result = build_result(single, [row], [time.perf_counter() - t0], started,
                              source_path=args.config)
        paths = emit_outputs(result, args.out)
        trace = paths["csv"].with_name(paths["csv"].name[:-4] + ".trace.csv")
        run.evolution.write_trace_csv(trace)
        logger.info("wrote %s and %s", paths["csv"], trace)
    return 0 if row["converged"] == "true" and not row["error"] else 1


def _sweep(cfg: RunConfig, args, default_prefix: str) -> int:
    spec = SweepSpec(cfg, args.out or default_prefix, args.config)
    result = run_sweep(spec, workers=max(1, args.workers))
    paths = emit_outputs(result, spec.out_prefix)
    bad = [r for r in result.rows if r["converged"] != "true" or r["error"]]
    print(f"{len(result.rows)} points written to {paths['csv']} "
          f"({len(bad)} failed or not converged)")
    for r in bad:
        print(f"  b={r['b']} g12_fraction={r['g12_fraction']} alpha={r['alpha']}: "
              f"{r['error'] or 'not converged'}", file=sys.stderr)
    return 0 if not bad else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.verb == "validate":
            return _validate(cfg)
        if args.verb == "run":
            return _run(cfg, args)
        if args.verb == "sweep":
            return _sweep(cfg, args, "sweep")
        canned = fig3_config if args.verb == "fig3" else fig4_config
        return _sweep(canned(cfg), args, args.verb)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # regime failures and invalid parameters in single runs
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
