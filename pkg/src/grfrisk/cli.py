"""Command-line entry point: ``grfrisk <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grfrisk", description="Geographical random forest risk mapping")
    p.add_argument("--config", type=Path, help="pipeline config JSON")
    p.add_argument("--seed", type=int, help="override the model/SMOTE seed")
    p.add_argument("--out", type=Path, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("featurize", help="buffer features for every event")

    s = sub.add_parser("select", help="MWU + VIF feature screening")
    s.add_argument("--features", type=Path)

    s = sub.add_parser("train", help="fit the GRF and report test metrics")
    s.add_argument("--features", type=Path)
    s.add_argument("--selected", type=Path)
    s.add_argument("--a", type=float, help="localization weight used for reporting and risk maps")

    s = sub.add_parser("sweep", help="evaluate a list of localization weights")
    s.add_argument("--features", type=Path)
    s.add_argument("--selected", type=Path)
    s.add_argument("--a-values", type=_floats)

    s = sub.add_parser("riskmap", help="predict risk on a grid")
    s.add_argument("--model", type=Path)
    s.add_argument("--boundary", type=Path)
    s.add_argument("--idw-spacing", type=float)

    s = sub.add_parser("importance", help="global-forest importance with zone directions")
    s.add_argument("--model", type=Path)
    s.add_argument("--grid", type=Path, help="risk CSV written by riskmap")

    s = sub.add_parser("synth", help="write a synthetic dataset and config")
    s.add_argument("--scenario", choices=pl.SCENARIOS, default="heterogeneous")
    s.add_argument("--n-events", type=int, default=600)
    s.add_argument("--regions", type=int, default=3)
    s.add_argument("--features", type=int, default=10)
    s.add_argument("--imbalance", type=float, default=0.83)

    sub.add_parser("run", help="featurize, select, train, riskmap and importance in sequence")
    return p


def _load_config(args) -> pl.PipelineConfig:
    if args.config is None:
        raise pl.PipelineError("--config is required for this command")
    cfg = pl.PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = str(args.out.resolve())
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.command

    if cmd == "synth":
        out = args.out or Path(".")
        cfg = pl.cmd_synth(out, args.scenario, args.seed or 0, args.n_events, args.regions,
                           args.features, args.imbalance)
        print(out / "config.json")
        return 0

    cfg = _load_config(args)
    if cmd == "featurize":
        print(pl.cmd_featurize(cfg))
    elif cmd == "select":
        print(pl.cmd_select(cfg, args.features))
    elif cmd == "train":
        if args.a is not None:
            cfg.local_weight_a = args.a
        pl.cmd_train(cfg, args.features, args.selected)
        print(cfg.out / pl.MODEL_JSON)
    elif cmd == "sweep":
        print(pl.cmd_sweep(cfg, args.a_values, args.features, args.selected))
    elif cmd == "riskmap":
        if args.boundary is not None:
            cfg.boundary = str(args.boundary.resolve())
        if args.idw_spacing is not None:
            cfg.idw.spacing_m = args.idw_spacing
        print(pl.cmd_riskmap(cfg, args.model).geojson)
    elif cmd == "importance":
        print(pl.cmd_importance(cfg, args.model, args.grid))
    elif cmd == "run":
        pl.cmd_featurize(cfg)
        pl.cmd_select(cfg)
        pl.cmd_train(cfg)
        res = pl.cmd_riskmap(cfg)
        print(pl.cmd_importance(cfg, grid_path=res.csv))
    return 0


def main(argv=None) -> None:
    try:
        code = run(argv)
    except pl.PipelineError as exc:
        print(f"grfrisk: error: {exc}", file=sys.stderr)
        code = 2
    sys.exit(code)


if __name__ == "__main__":
    main()
