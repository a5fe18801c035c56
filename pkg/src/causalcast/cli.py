"""Command-line entry point tying the pipeline together.

Subcommands: ``synth``, ``train``, ``cv``, ``rank``, ``baseline var|cpm``,
``gradcheck``.  Every command is deterministic given its config (seeds
included), writes UTF-8 CSV/JSON outputs, and dumps its effective merged
configuration as ``config.json`` next to those outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .atlas import load_atlas_labels
from .autodiff import Tensor, grad_check
from .config import (
    CvConfig,
    DataConfig,
    SynthConfig,
    build_section,
    dump_effective_config,
    load_config_file,
)
from .cv import (
    CvResult,
    rank_tables_from_folds,
    run_cv,
    sweep_alpha,
    sweep_heads,
)
from .data import Dataset, load_dataset, prepared_pair, qc_filter, write_subject
from .errors import CausalcastError
from .loss import bce_graph, freq_loss_graph
from .metrics import RankTable, aggregate_top10, predictability, rank_rois
from .model import (
    ModelConfig,
    batch_steps,
    forward,
    forward_graph,
    init_params,
    load_checkpoint,
    param_shapes,
    save_checkpoint,
)
from .synth import default_two_class_spec, make_dataset
from .trainer import TrainConfig, train
from .var import fit_var, var_predictability

GRADCHECK_TOLERANCE = 1e-4


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file; flags override it")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", type=Path, required=True)
    parser.add_argument("--phenotype", type=Path, required=True)
    parser.add_argument("--n-rois", type=int, default=None, help="expected channel count (default 116)")
    parser.add_argument("--fd-threshold", type=float, default=None, help="mean-FD QC cutoff in mm (default 0.15)")
    parser.add_argument("--fd-column", default=None, help="phenotype column holding mean FD")
    parser.add_argument("--atlas-labels", type=Path, default=None, help="index,name CSV of region labels")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hidden", type=int, default=None)
    parser.add_argument("--heads", type=int, default=None)
    parser.add_argument("--lag", type=int, default=None, help="forecast lag in samples")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None, help="frequency-loss scale")
    parser.add_argument("--lr0", type=float, default=None)
    parser.add_argument("--lr-halving-period", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a two-class synthetic dataset on disk")
    _add_config_flag(p_synth)
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--n", type=int, default=None)
    p_synth.add_argument("--t-len", type=int, default=None)
    p_synth.add_argument("--subjects-per-class", type=int, default=None)
    p_synth.add_argument("--noise-sigma", type=float, default=None)
    p_synth.add_argument("--planted-weight", type=float, default=None)
    p_synth.add_argument("--spectral-radius-cap", type=float, default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train on a dataset and save a checkpoint")
    _add_config_flag(p_train)
    _add_data_flags(p_train)
    _add_model_flags(p_train)
    _add_train_flags(p_train)
    p_train.add_argument("--out", type=Path, required=True)
    p_train.set_defaults(func=cmd_train)

    p_cv = sub.add_parser("cv", help="5-fold cross-validation with summary tables")
    _add_config_flag(p_cv)
    _add_data_flags(p_cv)
    _add_model_flags(p_cv)
    _add_train_flags(p_cv)
    p_cv.add_argument("--out", type=Path, required=True)
    p_cv.add_argument("--jobs", type=int, default=None, help="fold workers (default: available cores)")
    p_cv.add_argument("--baseline", choices=["cpm"], default=None)
    p_cv.add_argument("--rank-top-k", type=int, default=None, help="per-subject top-k for rank tables")
    p_cv.add_argument("--alpha-sweep", default=None, help="comma list of alphas; sweep instead of full CV")
    p_cv.add_argument("--head-sweep", default=None, help="comma list of head counts; sweep instead of full CV")
    p_cv.set_defaults(func=cmd_cv)

    p_rank = sub.add_parser("rank", help="population ROI rank tables from a checkpoint")
    _add_config_flag(p_rank)
    _add_data_flags(p_rank)
    p_rank.add_argument("--checkpoint", type=Path, required=True)
    p_rank.add_argument("--out", type=Path, required=True)
    p_rank.add_argument("--top-k", type=int, default=10, help="per-subject top-k ROIs")
    p_rank.set_defaults(func=cmd_rank)

    p_base = sub.add_parser("baseline", help="linear reference models")
    base_sub = p_base.add_subparsers(dest="baseline_kind", required=True)

    p_var = base_sub.add_parser("var", help="least-squares VAR fit and predictability per subject")
    _add_config_flag(p_var)
    _add_data_flags(p_var)
    p_var.add_argument("--out", type=Path, required=True)
    p_var.add_argument("--lag-order", type=int, default=1)
    p_var.set_defaults(func=cmd_baseline_var)

    p_cpm = base_sub.add_parser("cpm", help="correlation-features ridge baseline under 5-fold CV")
    _add_config_flag(p_cpm)
    _add_data_flags(p_cpm)
    _add_train_flags(p_cpm)
    p_cpm.add_argument("--out", type=Path, required=True)
    p_cpm.add_argument("--jobs", type=int, default=None)
    p_cpm.set_defaults(func=cmd_baseline_cpm)

    p_grad = sub.add_parser("gradcheck", help="full-network gradient check on toy shapes")
    p_grad.add_argument("--eps", type=float, default=1e-3)
    p_grad.add_argument("--alpha", type=float, default=1e-2)
    p_grad.add_argument("--seed", type=int, default=42)
    p_grad.set_defaults(func=cmd_gradcheck)

    return parser


def _data_overrides(args) -> dict:
    return {
        "n_rois": args.n_rois,
        "fd_threshold": args.fd_threshold,
        "fd_column": args.fd_column,
        "atlas_labels": str(args.atlas_labels) if args.atlas_labels else None,
    }


def _model_overrides(args) -> dict:
    return {"hidden": args.hidden, "heads": args.heads, "lag": args.lag}


def _train_overrides(args) -> dict:
    return {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "alpha": args.alpha,
        "lr0": args.lr0,
        "lr_halving_period": args.lr_halving_period,
        "seed": args.seed,
    }


def _load_cli_dataset(args, data_cfg: DataConfig) -> Dataset:
    labels = load_atlas_labels(data_cfg.atlas_labels, n=data_cfg.n_rois)
    dataset = load_dataset(
        args.manifest,
        args.phenotype,
        n_expected=data_cfg.n_rois,
        atlas_labels=labels,
        fd_column=data_cfg.fd_column,
    )
    kept = qc_filter(dataset, data_cfg.fd_threshold)
    dropped = len(dataset) - len(kept)
    if dropped:
        print(f"QC filter at {data_cfg.fd_threshold} mm dropped {dropped} of {len(dataset)} subjects")
    return kept


def _write_rank_csv(path: Path, table: RankTable) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["roi_index", "roi_name", "count", "population"])
        for roi_index, roi_name, count in table.entries:
            writer.writerow([roi_index, roi_name, count, table.population])


def _write_summary_outputs(out: Path, result: CvResult, model_label: str) -> None:
    summary_obj = result.to_dict()
    (out / "summary.json").write_text(json.dumps(summary_obj, sort_keys=True, indent=2) + "\n")
    for fold in result.folds:
        (out / f"fold_{fold.fold}.json").write_text(json.dumps(fold.to_dict(), sort_keys=True, indent=2) + "\n")
    header = f"{'Model':<10}{'Accuracy':<18}{'AUC':<18}{'Recall':<18}{'Precision':<18}"
    cells = [model_label]
    for metric in ("accuracy", "auc", "recall", "precision"):
        cells.append(result.summary[metric]["formatted"])
    row = f"{cells[0]:<10}{cells[1]:<18}{cells[2]:<18}{cells[3]:<18}{cells[4]:<18}"
    (out / "summary_table.txt").write_text(header + "\n" + row + "\n")
    print(header)
    print(row)


def cmd_synth(args) -> int:
    file_cfg = load_config_file(args.config)
    cfg: SynthConfig = build_section(
        "synth",
        file_cfg,
        {
            "seed": args.seed,
            "n": args.n,
            "t_len": args.t_len,
            "subjects_per_class": args.subjects_per_class,
            "noise_sigma": args.noise_sigma,
            "planted_weight": args.planted_weight,
            "spectral_radius_cap": args.spectral_radius_cap,
        },
    )
    spec = default_two_class_spec(
        subjects_per_class=cfg.subjects_per_class,
        seed=cfg.seed,
        n=cfg.n,
        t_len=cfg.t_len,
        noise_sigma=cfg.noise_sigma,
        planted_weight=cfg.planted_weight,
        radius_cap=cfg.spectral_radius_cap,
    )
    dataset = make_dataset(spec)
    out = args.out
    (out / "subjects").mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    phenotype_rows = []
    for s in dataset.subjects:
        rel = f"subjects/{s.subject_id}.csv"
        write_subject(s.x, out / rel)
        manifest_rows.append((s.subject_id, rel))
        phenotype_rows.append((s.subject_id, 1 if s.label == 1 else 2, 0.0))
    with (out / "manifest.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "path"])
        writer.writerows(manifest_rows)
    with (out / "phenotype.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["SUB_ID", "DX_GROUP", "func_mean_fd"])
        writer.writerows(phenotype_rows)
    (out / "dataset.json").write_text(
        json.dumps(
            {
                "n": cfg.n,
                "t_len": cfg.t_len,
                "subjects": len(dataset),
                "subjects_per_class": cfg.subjects_per_class,
                "planted_channels": [0, 1],
            },
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    dump_effective_config(out, "synth", {"synth": cfg})
    print(f"wrote {len(dataset)} subjects to {out}")
    return 0


def cmd_train(args) -> int:
    file_cfg = load_config_file(args.config)
    data_cfg: DataConfig = build_section("data", file_cfg, _data_overrides(args))
    model_cfg: ModelConfig = build_section("model", file_cfg, _model_overrides(args))
    train_cfg: TrainConfig = build_section("train", file_cfg, _train_overrides(args))
    dataset = _load_cli_dataset(args, data_cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with (out / "train_log.jsonl").open("w") as log_stream:
        result = train(dataset, model_cfg, train_cfg, log_stream=log_stream)
    save_checkpoint(result.params, out / "checkpoint.json")
    dump_effective_config(out, "train", {"data": data_cfg, "model": model_cfg, "train": train_cfg})
    final = result.trace.epochs[-1]
    print(f"trained {train_cfg.epochs} epochs; final mean bce {final['bce']:.4f}")
    print(f"checkpoint: {out / 'checkpoint.json'}")
    return 0


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def cmd_cv(args) -> int:
    file_cfg = load_config_file(args.config)
    data_cfg: DataConfig = build_section("data", file_cfg, _data_overrides(args))
    model_cfg: ModelConfig = build_section("model", file_cfg, _model_overrides(args))
    train_cfg: TrainConfig = build_section("train", file_cfg, _train_overrides(args))
    cv_cfg: CvConfig = build_section(
        "cv",
        file_cfg,
        {"jobs": args.jobs, "baseline": args.baseline, "rank_top_k": args.rank_top_k},
    )
    dataset = _load_cli_dataset(args, data_cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    sections = {"data": data_cfg, "model": model_cfg, "train": train_cfg, "cv": cv_cfg}

    if args.alpha_sweep or args.head_sweep:
        if args.alpha_sweep:
            rows = sweep_alpha(dataset, model_cfg, train_cfg, _parse_float_list(args.alpha_sweep),
                               val_fraction=cv_cfg.val_fraction)
            with (out / "alpha_sweep.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["alpha", "val_accuracy", "scaled_freq_loss"])
                for r in rows:
                    writer.writerow([repr(r["alpha"]), repr(r["val_accuracy"]), repr(r["scaled_freq_loss"])])
            print(f"alpha sweep over {len(rows)} values -> {out / 'alpha_sweep.csv'}")
        if args.head_sweep:
            rows = sweep_heads(dataset, model_cfg, train_cfg, _parse_int_list(args.head_sweep),
                               val_fraction=cv_cfg.val_fraction)
            with (out / "head_sweep.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["heads", "val_accuracy"])
                for r in rows:
                    writer.writerow([r["heads"], repr(r["val_accuracy"])])
            print(f"head sweep over {len(rows)} values -> {out / 'head_sweep.csv'}")
        dump_effective_config(out, "cv", sections, extras={"alpha_sweep": args.alpha_sweep, "head_sweep": args.head_sweep})
        return 0

    result = run_cv(
        dataset,
        model_cfg,
        train_cfg,
        jobs=cv_cfg.effective_jobs(),
        baseline=cv_cfg.baseline,
        val_fraction=cv_cfg.val_fraction,
    )
    _write_summary_outputs(out, result, model_label=cv_cfg.baseline or "ours")
    if cv_cfg.baseline is None:
        asd, control = rank_tables_from_folds(
            result.folds,
            n_rois=dataset.n_channels,
            roi_names=dataset.atlas_labels,
            top_k=cv_cfg.rank_top_k,
        )
        _write_rank_csv(out / "rank_asd.csv", asd)
        _write_rank_csv(out / "rank_control.csv", control)
    dump_effective_config(out, "cv", sections, extras={"jobs": cv_cfg.effective_jobs()})
    return 0


def cmd_rank(args) -> int:
    file_cfg = load_config_file(args.config)
    data_cfg: DataConfig = build_section("data", file_cfg, _data_overrides(args))
    params = load_checkpoint(args.checkpoint)
    dataset = _load_cli_dataset(args, data_cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    rankings: list[list[int]] = []
    labels: list[int] = []
    for subject in dataset.subjects:
        pair = prepared_pair(subject, params.lag)
        result, p = forward(pair, params)
        predicted = 1 if p > 0.5 else 0
        if predicted != subject.label:
            continue
        pred = predictability(result.x_hat, pair.target)
        rankings.append(rank_rois(pred, args.top_k))
        labels.append(subject.label)
    asd, control = aggregate_top10(
        rankings, labels, n_rois=dataset.n_channels, roi_names=dataset.atlas_labels
    )
    _write_rank_csv(out / "rank_asd.csv", asd)
    _write_rank_csv(out / "rank_control.csv", control)
    dump_effective_config(out, "rank", {"data": data_cfg}, extras={"top_k": args.top_k, "checkpoint": str(args.checkpoint)})
    print(f"rank tables over {len(rankings)} correctly classified subjects -> {out}")
    return 0


def cmd_baseline_var(args) -> int:
    file_cfg = load_config_file(args.config)
    data_cfg: DataConfig = build_section("data", file_cfg, _data_overrides(args))
    dataset = _load_cli_dataset(args, data_cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with (out / "predictability.csv").open("w", newline="") as pf, (out / "coefficients.csv").open(
        "w", newline=""
    ) as cf:
        pred_writer = csv.writer(pf)
        pred_writer.writerow(["subject_id", "roi_index", "roi_name", "predictability", "r_squared"])
        coef_writer = csv.writer(cf)
        coef_writer.writerow(["subject_id", "lag", "target_roi", "source_roi", "coefficient"])
        for subject in dataset.subjects:
            fit = fit_var(subject.x, args.lag_order)
            pred = var_predictability(fit, subject.x)
            for i in range(dataset.n_channels):
                value = pred.per_roi[i]
                pred_writer.writerow(
                    [
                        subject.subject_id,
                        i,
                        dataset.atlas_labels[i],
                        "" if np.isnan(value) else repr(float(value)),
                        repr(float(fit.r_squared[i])),
                    ]
                )
            for lag_idx, coeffs in enumerate(fit.model.coeffs, start=1):
                for i in range(dataset.n_channels):
                    for j in range(dataset.n_channels):
                        coef_writer.writerow([subject.subject_id, lag_idx, i, j, repr(float(coeffs[i, j]))])
    dump_effective_config(out, "baseline var", {"data": data_cfg}, extras={"lag_order": args.lag_order})
    print(f"VAR baseline over {len(dataset)} subjects -> {out}")
    return 0


def cmd_baseline_cpm(args) -> int:
    file_cfg = load_config_file(args.config)
    data_cfg: DataConfig = build_section("data", file_cfg, _data_overrides(args))
    train_cfg: TrainConfig = build_section("train", file_cfg, _train_overrides(args))
    cv_cfg: CvConfig = build_section("cv", file_cfg, {"jobs": args.jobs, "baseline": "cpm"})
    dataset = _load_cli_dataset(args, data_cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    result = run_cv(
        dataset,
        ModelConfig(),
        train_cfg,
        jobs=cv_cfg.effective_jobs(),
        baseline="cpm",
        val_fraction=cv_cfg.val_fraction,
    )
    _write_summary_outputs(out, result, model_label="cpm")
    dump_effective_config(out, "baseline cpm", {"data": data_cfg, "train": train_cfg, "cv": cv_cfg})
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    n, hidden, t_len, heads, batch = 3, 8, 10, 2, 2
    cfg = ModelConfig(hidden=hidden, heads=heads, lag=1)
    params = init_params(n, cfg, seed=args.seed)
    names = sorted(params.weights)
    shapes = param_shapes(n, hidden)
    flat = np.concatenate([params.weights[k].ravel() for k in names])
    from .data import lag_split

    pairs = [lag_split(rng.normal(size=(n, t_len)), 1) for _ in range(batch)]
    y = Tensor(np.array([[1.0], [0.0]]))
    target_stack = Tensor(np.concatenate([p.target for p in pairs], axis=0))
    xs_np = batch_steps([p.input for p in pairs])

    def objective(leaf: Tensor) -> Tensor:
        weights = {}
        offset = 0
        for name in names:
            r, c = shapes[name]
            weights[name] = ad.reshape(ad.slice_cols(leaf, offset, offset + r * c), r, c)
            offset += r * c
        out = forward_graph(weights, [Tensor(s) for s in xs_np], heads)
        return bce_graph(out.p, y) + args.alpha * freq_loss_graph(out.xhat_stack, target_stack)

    err = grad_check(objective, flat, eps=args.eps)
    ok = err < GRADCHECK_TOLERANCE
    print(f"full-network gradient check: max rel err {err:.3e} over {flat.size} parameters "
          f"({'PASS' if ok else 'FAIL'} at {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CausalcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
