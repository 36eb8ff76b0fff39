"""Command-line interface.

Subcommands: ``select`` (fit and report), ``map`` (MAP subset from a saved
model), ``sample`` (draw subsets from a saved model), ``demo fig1``,
``demo spatial``, and ``bench collinearity``. Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .data_io import ingest_csv
from .dpp import LEnsemble, greedy_map, sample as dpp_sample, subset_log_prob
from .errors import DataError, NumericalError
from .experiments import bench_collinearity, demo_fig1, demo_spatial
from .learner import (
    LearnerConfig,
    build_selection,
    load_artifact_posterior,
    model_artifact,
    run,
)
from .metrics import metrics_diversity
from .report import load_json, write_csv, write_json, write_report
from .similarity import SimilaritySpec, build_similarity
from .spatial import SpatialConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="dppselect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="fit a posterior and report the selection")
    sel.add_argument("--data", required=True, help="CSV file with a header row")
    sel.add_argument("--response", required=True, help="name of the response column")
    sel.add_argument(
        "--mode",
        default="bernoulli-dpp",
        choices=["bernoulli-dpp", "dpp-bernoulli"],
    )
    sel.add_argument("--kappa", type=float, default=4.0, help="target subset size")
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--iters", type=int, default=2000)
    sel.add_argument(
        "--similarity",
        default="gram",
        choices=["gram", "identity", "rbf"],
    )
    sel.add_argument("--side-info", default=None, help="side-info CSV for rbf")
    sel.add_argument("--config", default=None, help="JSON file of extra options")
    sel.add_argument("--output", default=".", help="output directory")
    sel.add_argument("--no-figures", action="store_true")

    mp = sub.add_parser("map", help="extract the MAP subset from a saved model")
    mp.add_argument("--model", required=True)
    mp.add_argument("--output", default=".")

    smp = sub.add_parser("sample", help="draw subsets from a saved model")
    smp.add_argument("--model", required=True)
    smp.add_argument("--draws", type=int, default=100)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--output", default=".")

    demo = sub.add_parser("demo", help="built-in demonstrations")
    demo_sub = demo.add_subparsers(dest="demo_command", required=True)
    fig1 = demo_sub.add_parser("fig1", help="block-kernel collinearity demo")
    fig1.add_argument("--samples", type=int, default=20000)
    fig1.add_argument("--seed", type=int, default=0)
    fig1.add_argument(
        "--ratios",
        default="1,10,100,1000",
        help="comma-separated eigenvalue ratios",
    )
    fig1.add_argument("--output", default=".")
    fig1.add_argument("--no-figures", action="store_true")
    spatial = demo_sub.add_parser("spatial", help="synthetic spatial gridding demo")
    spatial.add_argument("--seed", type=int, default=0)
    spatial.add_argument(
        "--methods",
        default="bernoulli_dpp,meanfield",
        help="comma-separated method names",
    )
    spatial.add_argument("--sensors", type=int, default=100)
    spatial.add_argument("--noise-sd", type=float, default=0.1)
    spatial.add_argument("--train-frac", type=float, default=0.7)
    spatial.add_argument("--grid", type=int, default=12, help="lattice size per axis")
    spatial.add_argument("--iters", type=int, default=800)
    spatial.add_argument("--kappa", type=float, default=12.0)
    spatial.add_argument("--output", default=".")
    spatial.add_argument("--no-figures", action="store_true")

    bench = sub.add_parser("bench", help="benchmarks")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    coll = bench_sub.add_parser("collinearity", help="grouped-collinearity benchmark")
    coll.add_argument("--seeds", type=int, default=20)
    coll.add_argument("--seed", type=int, default=0, help="first seed")
    coll.add_argument("--iters", type=int, default=2000)
    coll.add_argument("--kappa", type=float, default=6.0)
    coll.add_argument("--match-k", type=int, default=3)
    coll.add_argument("--output", default=".")
    coll.add_argument("--no-figures", action="store_true")
    return parser


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"config {path} must hold a JSON object")
    return payload


def _cmd_select(args) -> int:
    model = ingest_csv(args.data, args.response)
    overrides = _load_config_file(args.config)
    for key in ("ridge_scale", "a0", "b0", "alpha"):
        if key in overrides:
            model = dataclasses.replace(model, **{key: overrides.pop(key)})
    mode = args.mode.replace("-", "_")
    cfg_kwargs = {
        "mode": mode,
        "n_iters": args.iters,
        "kappa": args.kappa,
        "seed": args.seed,
    }
    allowed = {f.name for f in dataclasses.fields(LearnerConfig)}
    unknown = set(overrides) - allowed - {"sigma", "rank_d"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    sim_kwargs = {k: overrides.pop(k) for k in ("sigma", "rank_d") if k in overrides}
    cfg_kwargs.update(overrides)
    config = LearnerConfig(**cfg_kwargs)

    source = {"gram": "gram_of_design", "identity": "identity", "rbf": "rbf_side_info"}[
        args.similarity
    ]
    side_info = None
    if source == "rbf_side_info":
        if args.side_info is None:
            raise UsageError("--side-info is required with --similarity rbf")
        side_info = _read_side_info(args.side_info, model)
    phi = build_similarity(
        SimilaritySpec(source, **sim_kwargs), model.design, side_info
    )

    theta, lreport = run(model, phi, config)
    report = build_selection(model, phi, config, theta, lreport)
    out = Path(args.output)
    write_json(model_artifact(theta, phi, config, lreport, phi_source=source), out / "model.json")
    write_report(report, out / "report.json")
    if not args.no_figures:
        from .plots import save_marginals_figure

        save_marginals_figure(
            report.inclusion_marginals,
            report.selected,
            out / "marginals.png",
            title=f"{mode} inclusion marginals",
        )
    print(f"selected features: {list(report.selected)}")
    print(f"wrote {out / 'model.json'} and {out / 'report.json'}")
    return 0


def _read_side_info(path, model) -> np.ndarray:
    """Side-info CSV: first column is the feature name, the rest numeric."""
    import csv as _csv

    try:
        text = Path(path).open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with text:
        reader = _csv.reader(text)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        profiles: dict[str, list[float]] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            name = row[0].strip()
            try:
                profiles[name] = [float(v) for v in row[1:]]
            except ValueError:
                raise DataError(
                    f"non-numeric side-info value at row {line_no} of {path}"
                ) from None
    if model.feature_names is None:
        raise DataError("side info requires named design columns")
    missing = [n for n in model.feature_names if n not in profiles]
    if missing:
        raise DataError(f"side info missing rows for features: {missing[:5]}")
    return np.array([profiles[n] for n in model.feature_names], dtype=float)


def _cmd_map(args) -> int:
    artifact = load_json(args.model)
    phi, theta, mode = load_artifact_posterior(artifact)
    if mode == "bernoulli_dpp":
        ens = LEnsemble(phi, theta)
        selected = greedy_map(ens)
        log_prob = subset_log_prob(ens, selected, normalized=True)
    else:
        selected = _threshold_subset(theta)
        log_prob = _bernoulli_log_prob(theta, selected)
    logdet, _ = metrics_diversity(phi.gram(), selected)
    payload = {
        "mode": mode,
        "selected": list(selected.indices),
        "log_prob": log_prob,
        "diversity_logdet": logdet,
    }
    out = Path(args.output)
    write_json(payload, out / "map.json")
    print(f"MAP subset: {list(selected.indices)}")
    return 0


def _threshold_subset(theta):
    from .dpp import Subset

    return Subset(tuple(int(i) for i in np.flatnonzero(theta > 0.0)))


def _bernoulli_log_prob(theta, subset) -> float:
    from scipy.special import expit

    probs = expit(theta)
    ind = subset.indicator(theta.shape[0])
    return float(ind @ np.log(probs) + (1.0 - ind) @ np.log1p(-probs))


def _cmd_sample(args) -> int:
    artifact = load_json(args.model)
    phi, theta, mode = load_artifact_posterior(artifact)
    rng = np.random.default_rng(args.seed)
    rows = []
    if mode == "bernoulli_dpp":
        ens = LEnsemble(phi, theta)
        draw = lambda: dpp_sample(ens, rng)
    else:
        from scipy.special import expit

        from .dpp import Subset

        probs = expit(theta)
        draw = lambda: Subset.from_indicator(rng.random(theta.shape[0]) < probs)
    for t in range(args.draws):
        gamma = draw()
        rows.append(
            {
                "draw": t,
                "size": len(gamma),
                "indices": " ".join(map(str, gamma.indices)),
            }
        )
    out = Path(args.output)
    write_csv(out / "samples.csv", ["draw", "size", "indices"], rows)
    print(f"wrote {len(rows)} draws to {out / 'samples.csv'}")
    return 0


def _cmd_demo(args) -> int:
    if args.demo_command == "fig1":
        ratios = tuple(float(r) for r in args.ratios.split(","))
        demo_fig1(
            condition_numbers=ratios,
            n_samples=args.samples,
            seed=args.seed,
            output_dir=args.output,
            figures=not args.no_figures,
        )
        print(f"wrote {Path(args.output) / 'fig1.csv'}")
        return 0
    config = SpatialConfig(
        grid_shape=(args.grid, args.grid),
        n_sensors=args.sensors,
        noise_sd=args.noise_sd,
        train_frac=args.train_frac,
    )
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    demo_spatial(
        config=config,
        methods=methods,
        seed=args.seed,
        n_iters=args.iters,
        kappa=args.kappa,
        output_dir=args.output,
        figures=not args.no_figures,
    )
    print(f"wrote {Path(args.output) / 'spatial_summary.csv'}")
    return 0


def _cmd_bench(args) -> int:
    outcome = bench_collinearity(
        n_seeds=args.seeds,
        base_seed=args.seed,
        n_iters=args.iters,
        kappa=args.kappa,
        match_k=args.match_k,
        output_dir=args.output,
        figures=not args.no_figures,
    )
    summary = outcome["summary"]
    print(
        "balanced groups: {frac_dpp_balanced:.0%}, "
        "diversity wins: {frac_dpp_logdet_better:.0%}".format(**summary)
    )
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        if args.command == "select":
            return _cmd_select(args)
        if args.command == "map":
            return _cmd_map(args)
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "demo":
            return _cmd_demo(args)
        if args.command == "bench":
            return _cmd_bench(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
