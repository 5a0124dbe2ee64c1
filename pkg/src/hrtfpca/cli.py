"""Command-line surface for the full pipeline.

Subcommands: simulate, ingest, fit-spca, select-anthro, train, synth, eval.
Exit codes: 0 success, 2 validation/usage error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import anthro as anthro_mod
from . import evaluation, pca_baseline, predictors, reports, sim, spca, synthesis
from .dataset import (
    AnthroParams,
    DatasetError,
    PinnaParams,
    load_dataset,
    save_dataset,
    subjects_with_full_anthro,
)
from .pca_baseline import OffGridError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2

VARIANCE_Q_DEFAULT = (1, 5, 10, 20, 50, 60, 80, 100, 200, 500)


@dataclass
class CliConfig:
    """Defaults reproduce the reference configuration."""

    q: int = 200
    seed: int = 0
    learning_rate: float = 0.001
    weight_epochs: int = 1000
    dvspc_epochs: int = 10000
    hav_epochs: int = 20000
    itd_epochs: int = 11000
    patience: int = 200
    weight_hidden: int = 32
    direction_hidden: tuple[int, ...] = (64, 64, 64)

    @classmethod
    def from_args(cls, args) -> "CliConfig":
        cfg = cls()
        overrides = {}
        if getattr(args, "config", None):
            overrides.update(json.loads(Path(args.config).read_text()))
        for key in vars(cfg):
            arg_val = getattr(args, key, None)
            if arg_val is not None:
                overrides[key] = arg_val
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            if key == "direction_hidden":
                value = tuple(int(v) for v in value)
            setattr(cfg, key, value)
        return cfg

    def plan(self) -> predictors.TrainingPlan:
        return predictors.TrainingPlan(
            seed=self.seed,
            learning_rate=self.learning_rate,
            patience=self.patience,
            weight_epochs=self.weight_epochs,
            dvspc_epochs=self.dvspc_epochs,
            hav_epochs=self.hav_epochs,
            itd_epochs=self.itd_epochs,
            weight_hidden=self.weight_hidden,
            direction_hidden=self.direction_hidden,
        )


def load_anthro_json(path: str | Path) -> AnthroParams:
    """Parse an anthro.json file (flat keys mirroring the anthro.csv columns)."""
    raw = json.loads(Path(path).read_text())
    def get(key):
        v = raw.get(key)
        return None if v in (None, "") else float(v)

    return AnthroParams(
        x1=get("x1"), x2=get("x2"), x3=get("x3"), x12=get("x12"),
        left=PinnaParams(**{d: get(f"{d}_L") for d in ("d1", "d3", "d4", "d5", "d6")}),
        right=PinnaParams(**{d: get(f"{d}_R") for d in ("d1", "d3", "d4", "d5", "d6")}),
    )


def _cmd_simulate(args) -> int:
    ds = sim.simulate_dataset(n_subjects=args.subjects, seed=args.seed or 1250)
    save_dataset(ds, args.out)
    print(json.dumps({"subjects": len(ds.subjects), "out": str(args.out),
                      "source": ds.source}))
    return EXIT_OK


def _cmd_ingest(args) -> int:
    ds = load_dataset(args.input)
    summary = {
        "subjects": len(ds.subjects),
        "directions": ds.grid.direction_count,
        "hrir_length": ds.hrir_length,
        "sample_rate": ds.sample_rate,
        "full_anthro_subjects": len(subjects_with_full_anthro(ds)),
        "training_subjects": len(ds.training_subjects),
        "test_subjects": len(ds.test_subjects),
        "generic_subject_id": ds.generic_subject_id,
        "source": ds.source,
    }
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def _variance_table(ds, q_list) -> tuple[dict, dict]:
    """Per-ear cumulative variance from full-sphere single-ear fits."""
    panel = spca.log_magnitude_panel(ds)
    mu = spca.compute_global_mean(panel)
    table: dict[int, dict[str, float]] = {q: {} for q in q_list}
    eigenvalues = {}
    for ear_idx, ear in enumerate(("left", "right")):
        rows = spca.centered_rows(panel, mu, range(ds.grid.direction_count), ear=ear_idx)
        model, _ = spca.fit_spca(rows, q=1)  # eigenvalues cover every order
        eigenvalues[ear] = model.eigenvalues
        for q in q_list:
            table[q][ear] = spca.cumulative_variance(model, q)
    return table, eigenvalues


def _cmd_fit_spca(args) -> int:
    cfg = CliConfig.from_args(args)
    ds = load_dataset(args.input)
    out = Path(args.out)
    fitted = predictors.fit_pipeline_spca(ds, q=cfg.q)
    for hemi, model in fitted.models.items():
        spca.save_spca(model, out / f"spca_{hemi}")
    table, eigenvalues = _variance_table(ds, VARIANCE_Q_DEFAULT)
    reports.write_variance_table(out / "variance_table.csv", table)
    reports.plot_variance_curve(out / "variance_curve.png", eigenvalues,
                                marks=VARIANCE_Q_DEFAULT)
    print(json.dumps({"q": cfg.q, "out": str(out),
                      "variance_at_q": {e: round(table[cfg.q][e], 2)
                                        for e in ("left", "right")
                                        if cfg.q in table}}))
    return EXIT_OK


def _cmd_select_anthro(args) -> int:
    ds = load_dataset(args.input)
    panel = spca.log_magnitude_panel(ds)
    complete = subjects_with_full_anthro(ds)
    if len(complete) < 12:
        raise DatasetError("need at least 12 complete-anthro subjects for the analysis")
    names = ("x1", "x2", "x3", "x12", "d1", "d3", "d4", "d5", "d6")
    rows, obs_rows = [], []
    pos = {s.subject_id: i for i, s in enumerate(ds.subjects)}
    for sid in complete:
        a = ds.subject(sid).anthro
        for ear_idx, ear in enumerate(("left", "right")):
            pinna = a.left if ear == "left" else a.right
            rows.append([a.x1, a.x2, a.x3, a.x12] +
                        [getattr(pinna, d) for d in ("d1", "d3", "d4", "d5", "d6")])
            obs_rows.append(pos[sid] * 2 + ear_idx)
    anthro_matrix = np.asarray(rows)

    directions = list(range(0, ds.grid.direction_count, args.direction_stride))
    weights_by_direction = []
    for j in directions:
        _, w = pca_baseline.fit_direction_pca(panel, j, ear="both", p=args.orders)
        weights_by_direction.append(w[obs_rows])
    report = anthro_mod.build_selection_report(
        np.asarray(weights_by_direction), anthro_matrix, names
    )
    anthro_mod.save_report(report, args.out)
    print(json.dumps({"directions_tested": report.directions_tested,
                      "significance_counts": report.significance_counts,
                      "selected": {k: list(v) for k, v in report.selected.items()},
                      "out": str(args.out)}))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = CliConfig.from_args(args)
    ds = load_dataset(args.input)
    plan = cfg.plan()
    bundle_dir = Path(args.bundle)
    what = args.what

    if what == "all":
        bundle = predictors.train_bundle(ds, q=cfg.q, plan=plan)
        if args.with_pca_baseline:
            panel = spca.log_magnitude_panel(ds)
            pm = pca_baseline.train_direction_nets(panel, ds, cfg=plan.config(cfg.weight_epochs))
            pca_baseline.save_pca_method(pm, bundle_dir / "pca")
        predictors.save_bundle(bundle, bundle_dir)
        print(json.dumps({"bundle": str(bundle_dir), "q": bundle.q,
                          "components": ["weights", "dvspc", "hav", "itd"]}))
        return EXIT_OK

    if what == "pca":
        panel = spca.log_magnitude_panel(ds)
        pm = pca_baseline.train_direction_nets(panel, ds, cfg=plan.config(cfg.weight_epochs))
        pca_baseline.save_pca_method(pm, bundle_dir / "pca")
        print(json.dumps({"bundle": str(bundle_dir), "components": ["pca"]}))
        return EXIT_OK

    # per-family training merges into an existing (possibly partial) bundle
    fitted = predictors.fit_pipeline_spca(ds, q=cfg.q)
    if (bundle_dir / "bundle.json").is_file():
        bundle = predictors.load_bundle(bundle_dir)
    else:
        generic_hrirs = generic_itd = None
        if ds.generic_subject_id is not None:
            rec = ds.subject(ds.generic_subject_id)
            generic_hrirs = {"left": rec.hrir_left, "right": rec.hrir_right}
            generic_itd = predictors.ground_truth_itds(ds)[ds.generic_subject_id]
        bundle = predictors.PredictorBundle(
            spca_models=fitted.models, mu=fitted.mu,
            weights=None, dvspc=None, hav=None, itd=None,
            sample_rate=ds.sample_rate,
            training_subjects=tuple(ds.training_subjects),
            test_subjects=tuple(ds.test_subjects),
            generic_subject_id=ds.generic_subject_id,
            generic_hrirs=generic_hrirs, generic_itd=generic_itd,
            seed=plan.seed,
        )
    if what == "weights":
        bundle.weights = predictors.train_weight_nets(ds, fitted, plan)
    elif what == "dvspc":
        bundle.dvspc = predictors.train_dvspc_nets(fitted, plan)
    elif what == "hav":
        bundle.hav = predictors.train_hav_nets(fitted, plan)
    elif what == "itd":
        bundle.itd = predictors.train_itd_nets(ds, plan)
    predictors.save_bundle(bundle, bundle_dir)
    print(json.dumps({"bundle": str(bundle_dir), "trained": what,
                      "missing": bundle.missing_components()}))
    return EXIT_OK


def _load_bundle_with_pca(bundle_dir: Path) -> predictors.PredictorBundle:
    bundle = predictors.load_bundle(bundle_dir)
    pca_dir = bundle_dir / "pca"
    if (pca_dir / "pca_method.json").is_file():
        bundle.pca_method = pca_baseline.load_pca_method(pca_dir)
    return bundle


def _cmd_synth(args) -> int:
    bundle = _load_bundle_with_pca(Path(args.bundle))
    anthro = load_anthro_json(args.anthro)
    req = synthesis.SynthRequest(anthro=anthro, az_deg=args.az, el_deg=args.el,
                                 method=args.method)
    result = synthesis.synthesize(bundle, req)
    out = synthesis.export_hrir(result, args.out, fmt=args.format,
                                sample_rate=bundle.sample_rate)
    print(json.dumps({"out": str(out), "itd_ms": round(result.itd_ms, 4),
                      "method": result.method}))
    return EXIT_OK


def _cmd_eval(args) -> int:
    out = Path(args.out)
    ds = load_dataset(args.input)

    if args.what == "variance":
        q_list = tuple(int(v) for v in args.q_list.split(","))
        table, eigenvalues = _variance_table(ds, q_list)
        reports.write_variance_table(out / "variance_table.csv", table)
        reports.plot_variance_curve(out / "variance_curve.png", eigenvalues, marks=q_list)
        print(json.dumps({"variance_table": {q: table[q] for q in q_list}}, indent=1))
        return EXIT_OK

    bundle = _load_bundle_with_pca(Path(args.bundle))
    methods = tuple(args.methods.split(","))

    if args.what == "sd":
        report = evaluation.sd_report(bundle, ds, methods=methods)
        reports.write_sd_report(out / "sd_report.csv", report)
        reports.plot_sd_curves(out / "sd_curves.png", report)
        print(json.dumps({"overall_mean_db": {m: round(v, 3)
                                              for m, v in report.overall.items()}}))
        return EXIT_OK

    if args.what == "sfrs":
        sid = args.subject or bundle.test_subjects[0]
        rec = ds.subject(sid)
        bin_index = int(round(args.bin_hz / (bundle.sample_rate / predictors.N_BINS)))
        measured = evaluation.measured_log_panel(ds, sid, args.ear)
        maps = [evaluation.sfrs(measured, ds.grid, bin_index, method="measured",
                                sample_rate=bundle.sample_rate)]
        for method in methods:
            if method == "spca":
                panel = evaluation.synthesize_log_panel(bundle, rec.anthro, args.ear)
            elif method == "generic":
                panel = evaluation.generic_log_panel(bundle, args.ear)
            elif method == "pca":
                panel = evaluation.pca_log_panel(bundle, rec.anthro, args.ear)
            else:
                raise ValueError(f"unknown method {method!r}")
            maps.append(evaluation.sfrs(panel, ds.grid, bin_index, method=method,
                                        sample_rate=bundle.sample_rate,
                                        reference=measured))
        for m in maps:
            reports.write_sfrs_csv(out / f"sfrs_{m.method}_{int(m.bin_hz)}.csv", m)
        reports.plot_sfrs(out / f"sfrs_{int(maps[0].bin_hz)}.png", maps)
        print(json.dumps({"subject": sid, "bin_hz": maps[0].bin_hz,
                          "maps": [m.method for m in maps]}))
        return EXIT_OK

    if args.what == "errors":
        bundle.require_complete()
        errors = evaluation.error_summary(bundle, ds)
        reports.write_errors_json(out / "errors.json", errors)
        if args.figures:
            panel = spca.log_magnitude_panel(ds)
            sid = bundle.test_subjects[0]
            rec = ds.subject(sid)
            s_idx = ds.subject_ids.index(sid)
            model = bundle.spca_models["front"]
            rows = spca.centered_rows(panel[s_idx:s_idx + 1], bundle.mu,
                                      model.direction_indices, ear=0)
            truth = spca.project(model, rows)
            predicted = bundle.weights.predict(rec.anthro.spectral_vector("left"))["front"]
            reports.plot_weight_orders(out / "weight_orders.png", truth, predicted,
                                       label=f"subject {sid}, left ear")
            angles = model.directions
            cols = bundle.dvspc.predict("front", angles[:, 0], angles[:, 1])
            reports.plot_spc_maps(out / "spc_maps.png", model, cols)
        print(json.dumps({k: round(v, 6) for k, v in errors.items()}))
        return EXIT_OK

    raise ValueError(f"unknown eval target {args.what!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrtfpca",
        description="HRTF personalization: spatial decomposition, anthropometric "
                    "prediction, binaural synthesis, and objective reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated measurement campaign")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=45)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ingest", help="validate a dataset directory and summarize it")
    p.add_argument("--input", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("fit-spca", help="fit hemisphere decompositions + variance table")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_fit_spca)

    p = sub.add_parser("select-anthro", help="parameter significance / correlation report")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--orders", type=int, default=12)
    p.add_argument("--direction-stride", type=int, default=1)
    p.set_defaults(func=_cmd_select_anthro)

    p = sub.add_parser("train", help="train prediction networks into a bundle")
    p.add_argument("what", choices=("weights", "dvspc", "hav", "itd", "pca", "all"))
    p.add_argument("--input", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--learning-rate", type=float, dest="learning_rate", default=None)
    p.add_argument("--weight-epochs", type=int, dest="weight_epochs", default=None)
    p.add_argument("--dvspc-epochs", type=int, dest="dvspc_epochs", default=None)
    p.add_argument("--hav-epochs", type=int, dest="hav_epochs", default=None)
    p.add_argument("--itd-epochs", type=int, dest="itd_epochs", default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--with-pca-baseline", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("synth", help="synthesize a binaural HRIR pair")
    p.add_argument("--bundle", required=True)
    p.add_argument("--anthro", required=True, help="anthro.json path")
    p.add_argument("--az", type=float, required=True)
    p.add_argument("--el", type=float, required=True)
    p.add_argument("--method", choices=synthesis.METHODS, default="spca")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("f32", "wav"), default="f32")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="objective evaluation reports")
    p.add_argument("what", choices=("sd", "sfrs", "variance", "errors"))
    p.add_argument("--input", required=True)
    p.add_argument("--bundle", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", default="spca,generic")
    p.add_argument("--q-list", dest="q_list",
                   default=",".join(str(q) for q in VARIANCE_Q_DEFAULT))
    p.add_argument("--bin-hz", dest="bin_hz", type=float, default=12348.0)
    p.add_argument("--subject", default=None)
    p.add_argument("--ear", choices=("left", "right"), default="left")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and args.what != "variance" and not args.bundle:
        parser.error("eval requires --bundle for sd/sfrs/errors")
    try:
        return args.func(args)
    except (DatasetError, OffGridError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
