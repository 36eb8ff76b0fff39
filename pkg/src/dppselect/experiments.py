"""Experiment drivers: block-kernel demo, grouped-collinearity benchmark,
and the synthetic spatial gridding comparison."""

from __future__ import annotations

from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .baselines import forward_select, meanfield_select, omp
from .dpp import (
    LEnsemble,
    SimilarityFactor,
    Subset,
    greedy_map_k,
    inclusion_probabilities,
    sample as dpp_sample,
)
from .learner import LearnerConfig, build_selection, map_subset, run
from .metrics import mean_squared_error, metrics_diversity
from .regression import SpikeSlabModel, predict
from .report import write_csv, write_json, write_report
from .similarity import SimilaritySpec, build_similarity
from .spatial import SpatialConfig, bump_design, sample_sensors, synthetic_field

DEFAULT_RATIOS = (1.0, 10.0, 100.0, 1000.0)

# Orthonormal directions spanning the rank-2 similar block.
_BLOCK_U1 = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
_BLOCK_U2 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)


def block_similarity_factor(ratio: float, total: float = 2.0) -> SimilarityFactor:
    """Six items: the first three form one rank-2 similar block with
    eigenvalues summing to ``total`` at the given ratio; the last three are
    mutually dissimilar unit-quality singletons."""
    if ratio < 1.0:
        raise ValueError("ratio must be >= 1")
    lam1 = total * ratio / (1.0 + ratio)
    lam2 = total / (1.0 + ratio)
    phi = np.zeros((6, 5))
    phi[:3, 0] = np.sqrt(lam1) * _BLOCK_U1
    phi[:3, 1] = np.sqrt(lam2) * _BLOCK_U2
    phi[3:, 2:] = np.eye(3)
    return SimilarityFactor(phi)


def demo_fig1(
    condition_numbers=DEFAULT_RATIOS,
    n_samples: int = 20000,
    seed: int = 0,
    output_dir=None,
    figures: bool = True,
) -> list[dict]:
    """Exact and sampled per-block selection counts as the similar block
    becomes more collinear. Writes fig1.csv (and fig1.png) when an output
    directory is given."""
    rng = np.random.default_rng(seed)
    rows = []
    for ratio in condition_numbers:
        ens = LEnsemble(block_similarity_factor(ratio), np.zeros(6))
        k_diag = inclusion_probabilities(ens)
        counts = np.zeros(6)
        for _ in range(n_samples):
            for item in dpp_sample(ens, rng):
                counts[item] += 1
        freq = counts / n_samples
        block_var = float(np.sum(k_diag[:3] * (1.0 - k_diag[:3])))
        rows.append(
            {
                "ratio": float(ratio),
                "block_expected": float(k_diag[:3].sum()),
                "block_empirical": float(freq[:3].sum()),
                "block_se": float(np.sqrt(block_var / n_samples)),
                "singleton_expected": float(k_diag[3:].mean()),
                "singleton_empirical": float(freq[3:].mean()),
                "n_samples": n_samples,
            }
        )
    if output_dir is not None:
        out = Path(output_dir)
        write_csv(out / "fig1.csv", list(rows[0].keys()), rows)
        if figures:
            from .plots import save_fig1_figure

            save_fig1_figure(rows, out / "fig1.png")
    return rows


def make_collinear_problem(
    seed: int,
    n_train: int = 60,
    n_test: int = 40,
    group_size: int = 3,
    n_groups: int = 2,
    n_noise: int = 20,
    dup_noise: float = 0.01,
    noise_sd: float = 0.5,
    coefs: tuple[float, ...] = (2.0, 1.6),
) -> dict:
    """Grouped-collinearity synthetic: each relevant group is one latent
    signal observed through near-duplicate columns, plus independent noise
    features. The response sums the latent signals."""
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    groups = []
    columns = []
    signal = np.zeros(n)
    for g in range(n_groups):
        base = rng.standard_normal(n)
        start = len(columns)
        for _ in range(group_size):
            columns.append(base + dup_noise * rng.standard_normal(n))
        groups.append(tuple(range(start, start + group_size)))
        signal += coefs[g] * base
    for _ in range(n_noise):
        columns.append(rng.standard_normal(n))
    x = np.column_stack(columns)
    y = signal + noise_sd * rng.standard_normal(n)
    return {
        "x_train": x[:n_train],
        "y_train": y[:n_train],
        "x_test": x[n_train:],
        "y_test": y[n_train:],
        "groups": tuple(groups),
    }


def _group_counts(subset: Subset, groups) -> list[int]:
    members = set(subset.indices)
    return [len(members & set(g)) for g in groups]


def bench_collinearity(
    n_seeds: int = 20,
    base_seed: int = 0,
    n_iters: int = 2000,
    kappa: float = 6.0,
    match_k: int = 3,
    output_dir=None,
    figures: bool = True,
) -> dict:
    """Posterior-DPP vs. mean-field selection on the grouped-collinearity
    synthetic: per-seed diversity log-determinants, group occupancy, and
    held-out predictive error.

    All methods select exactly ``match_k`` features (greedy MAP at fixed
    cardinality for the DPP, top marginals for mean field) so the diversity
    comparison is at matched subset size."""
    rows = []
    for offset in range(n_seeds):
        seed = base_seed + offset
        problem = make_collinear_problem(seed)
        model = SpikeSlabModel(
            design=problem["x_train"],
            response=problem["y_train"],
        )
        phi = build_similarity(SimilaritySpec("gram_of_design"), problem["x_train"])
        config = LearnerConfig(
            mode="bernoulli_dpp", n_iters=n_iters, kappa=kappa, seed=seed
        )
        theta, _ = run(model, phi, config)
        dpp_sel = greedy_map_k(LEnsemble(phi, theta), match_k)
        k_ref = max(1, len(dpp_sel))
        mf = meanfield_select(model, replace(config, seed=seed), k=k_ref)
        gram = phi.gram()
        logdet_dpp, _ = metrics_diversity(gram, dpp_sel)
        logdet_mf, _ = metrics_diversity(gram, mf.selected)
        mse_dpp = _holdout_mse(model, dpp_sel, problem)
        mse_mf = _holdout_mse(model, mf.selected, problem)
        counts_dpp = _group_counts(dpp_sel, problem["groups"])
        counts_mf = _group_counts(mf.selected, problem["groups"])
        rows.append(
            {
                "seed": seed,
                "k_dpp": len(dpp_sel),
                "dpp_selected": " ".join(map(str, dpp_sel.indices)),
                "meanfield_selected": " ".join(map(str, mf.selected.indices)),
                "dpp_group_counts": " ".join(map(str, counts_dpp)),
                "meanfield_group_counts": " ".join(map(str, counts_mf)),
                "dpp_balanced": int(all(1 <= c <= 2 for c in counts_dpp)),
                "meanfield_same_group": int(any(c >= 2 for c in counts_mf)),
                "logdet_dpp": logdet_dpp,
                "logdet_meanfield": logdet_mf,
                "dpp_logdet_better": int(logdet_dpp > logdet_mf),
                "mse_dpp": mse_dpp,
                "mse_meanfield": mse_mf,
            }
        )
    summary = {
        "n_seeds": n_seeds,
        "frac_dpp_balanced": float(np.mean([r["dpp_balanced"] for r in rows])),
        "frac_dpp_logdet_better": float(
            np.mean([r["dpp_logdet_better"] for r in rows])
        ),
        "frac_meanfield_same_group": float(
            np.mean([r["meanfield_same_group"] for r in rows])
        ),
        "mean_mse_dpp": float(np.mean([r["mse_dpp"] for r in rows])),
        "mean_mse_meanfield": float(np.mean([r["mse_meanfield"] for r in rows])),
        "kappa": kappa,
        "match_k": match_k,
        "n_iters": n_iters,
        "base_seed": base_seed,
    }
    if output_dir is not None:
        out = Path(output_dir)
        write_csv(out / "collinearity.csv", list(rows[0].keys()), rows)
        write_json(summary, out / "collinearity_summary.json")
        if figures:
            from .plots import save_collinearity_figure

            save_collinearity_figure(rows, out / "collinearity.png")
    return {"rows": rows, "summary": summary}


def _holdout_mse(model: SpikeSlabModel, subset: Subset, problem: dict) -> float:
    mean, _ = predict(model, subset, problem["x_test"])
    return mean_squared_error(problem["y_test"], mean)


SPATIAL_METHODS = ("bernoulli_dpp", "dpp_bernoulli", "meanfield", "omp", "forward")


def demo_spatial(
    config: SpatialConfig | None = None,
    methods=("bernoulli_dpp", "meanfield"),
    seed: int = 0,
    n_iters: int = 800,
    kappa: float = 12.0,
    output_dir=None,
    figures: bool = True,
    field_fn=None,
) -> dict:
    """Grid-point selection for spatial prediction at matched cardinality.

    Generates the synthetic field, observes it with noise at the sensors,
    builds the multiscale bump design, runs each method, and reports held-out
    MSE, mean pairwise distance among selected centers, and diversity."""
    config = config or SpatialConfig()
    unknown = [m for m in methods if m not in SPATIAL_METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {SPATIAL_METHODS}")
    rng = np.random.default_rng(seed)
    sensors = sample_sensors(config, rng)
    values = field_fn(sensors) if field_fn is not None else synthetic_field(sensors, config)
    noise = rng.standard_normal(sensors.shape[0])
    y = values + config.noise_sd * noise

    n = sensors.shape[0]
    n_train = int(round(config.train_frac * n))
    n_train = min(max(n_train, 20), n - 1)
    perm = rng.permutation(n)
    train_idx, test_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    design, centers, widths = bump_design(config, sensors)
    x_train, y_train = design[train_idx], y[train_idx]
    x_test, y_test = design[test_idx], y[test_idx]

    model = SpikeSlabModel(design=x_train, response=y_train)
    phi = build_similarity(SimilaritySpec("gram_of_design"), x_train)
    gram = phi.gram()

    base_cfg = LearnerConfig(
        mode="bernoulli_dpp", n_iters=n_iters, kappa=kappa, seed=seed
    )
    k_ref = int(round(kappa))
    results = []
    fitted = {}
    ordered = list(methods)
    if "bernoulli_dpp" in ordered:  # run first so others can match its size
        ordered.remove("bernoulli_dpp")
        ordered.insert(0, "bernoulli_dpp")
    for rank, method in enumerate(ordered):
        method_seed = seed * 100 + rank
        if method == "bernoulli_dpp":
            cfg = replace(base_cfg, seed=method_seed)
            theta, lreport = run(model, phi, cfg)
            selected = map_subset(phi, theta, "bernoulli_dpp")
            if len(selected) == 0:
                selected = Subset((int(np.argmax(inclusion_probabilities(LEnsemble(phi, theta)))),))
            k_ref = max(1, len(selected))
            fitted[method] = (theta, cfg, lreport)
        elif method == "dpp_bernoulli":
            cfg = replace(base_cfg, mode="dpp_bernoulli", seed=method_seed)
            theta, lreport = run(model, phi, cfg)
            order = np.lexsort((np.arange(model.m), -theta))
            selected = Subset.from_iterable(order[:k_ref])
            fitted[method] = (theta, cfg, lreport)
        elif method == "meanfield":
            mf = meanfield_select(model, replace(base_cfg, seed=method_seed), k=k_ref)
            selected = mf.selected
        elif method == "omp":
            selected = omp(x_train, y_train, k_ref).selected
        else:  # forward
            selected = forward_select(model, k_ref).selected
        mean, _ = predict(model, selected, x_test)
        mse = mean_squared_error(y_test, mean)
        logdet, pairdist = metrics_diversity(gram, selected, coordinates=centers)
        results.append(
            {
                "method": method,
                "selected": list(selected.indices),
                "selected_centers": centers[list(selected.indices)].tolist(),
                "selected_scales": widths[list(selected.indices)].tolist(),
                "predictive_mse": mse,
                "mean_pairwise_distance": pairdist,
                "diversity_logdet": logdet,
                "cardinality": len(selected),
            }
        )
    outcome = {
        "seed": seed,
        "kappa": kappa,
        "n_iters": n_iters,
        "n_sensors": int(sensors.shape[0]),
        "n_features": int(design.shape[1]),
        "train_frac": config.train_frac,
        "results": results,
    }
    if output_dir is not None:
        out = Path(output_dir)
        summary_rows = [
            {
                "method": r["method"],
                "cardinality": r["cardinality"],
                "predictive_mse": r["predictive_mse"],
                "mean_pairwise_distance": r["mean_pairwise_distance"],
                "diversity_logdet": r["diversity_logdet"],
            }
            for r in results
        ]
        write_csv(
            out / "spatial_summary.csv", list(summary_rows[0].keys()), summary_rows
        )
        for method, (theta, cfg, lreport) in fitted.items():
            report = build_selection(model, phi, cfg, theta, lreport)
            entry = next(r for r in results if r["method"] == method)
            report.predictive_mse = entry["predictive_mse"]
            report.mean_pairwise_distance = entry["mean_pairwise_distance"]
            write_report(report, out / f"report_{method}.json")
        write_json(outcome, out / "spatial_run.json")
        if figures:
            from .plots import save_spatial_figure

            save_spatial_figure(config, sensors, values, results, out / "spatial.png")
    return outcome
