"""``fpv`` command line: one subcommand per pipeline stage.

Every subcommand writes its artifacts plus ``manifest.json`` under
``--out-dir``. Failures print a JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__, _accel
from .graph import GraphError, iter_jsonl, parse_graph, read_jsonl, validate as validate_graph

logger = logging.getLogger("floorplan_fpv")

EXIT_FAILURE = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------------------
# config and manifest plumbing
# ---------------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    """JSON config with optional sections: synth, train, cv, compare, explain, anom."""
    if path is None:
        return {}
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(cfg, dict):
        raise click.BadParameter("config must be a JSON object", param_hint="--config")
    unknown = set(cfg) - {"synth", "train", "cv", "compare", "explain", "anom"}
    if unknown:
        raise click.BadParameter(f"unknown config sections {sorted(unknown)}", param_hint="--config")
    return cfg


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)  # file name -> sha256
    seeds: dict[str, int] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__

    def add_input(self, path: str | Path | None) -> None:
        if path is not None:
            self.inputs[Path(path).name] = sha256_file(path)

    def write(self, out_dir: Path) -> None:
        payload = asdict(self)
        payload["outputs"] = sorted(set(self.outputs))
        (out_dir / "manifest.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(graphs: str, tabular: str, max_rent: float | None):
    from .dataset import join, load_tabular

    records, load_report = load_tabular(tabular)
    if load_report.dropped:
        logger.warning("dropped %d malformed tabular rows", len(load_report.dropped))
    ds, report = join(read_jsonl(graphs), records, max_rent=max_rent)
    logger.info(report.summary())
    if len(ds) == 0:
        raise click.ClickException("graph and tabular inputs share no ids")
    return ds


def _train_config(cfg: dict, epochs: int | None = None, seed: int | None = None):
    from .gcn import TrainConfig

    tc = TrainConfig.from_dict(cfg.get("train", {}))
    if epochs is not None:
        tc.epochs = epochs
    if seed is not None:
        tc.seed = seed
    return tc


def _truth_utility(truth: dict) -> dict[str, float]:
    return {r["id"]: float(r["graph_utility"]) for r in truth["records"]}


graphs_opt = click.option("--graphs", "graphs", required=True, type=click.Path(exists=True, dir_okay=False), help="Access graphs (JSONL).")
tabular_opt = click.option("--tabular", required=True, type=click.Path(exists=True, dir_okay=False), help="Property attributes (CSV).")
config_opt = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON config file.")
out_opt = click.option("--out-dir", required=True, type=click.Path(file_okay=False), help="Directory for outputs and manifest.json.")
max_rent_opt = click.option("--max-rent", type=float, default=None, help="Drop records with rent above this value.")


@click.group()
@click.version_option(__version__, prog_name="fpv")
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def cli(verbose: int) -> None:
    """Floor-plan valuation pipeline."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    _accel.tune_allocator()


# ---------------------------------------------------------------------------
# graph-level commands
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@out_opt
def validate(in_path: str, out_dir: str) -> None:
    """Check access graphs; malformed lines are reported, not fatal."""
    out = _out_dir(out_dir)
    man = RunManifest("validate", {})
    man.add_input(in_path)
    counts = {"total": 0, "valid": 0}
    with open(in_path, encoding="utf-8") as fh, open(out / "validation.jsonl", "w", encoding="utf-8", newline="\n") as dst:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            counts["total"] += 1
            try:
                rep = validate_graph(parse_graph(line)).to_dict()
            except GraphError as exc:
                rep = {"id": f"line{lineno}", "valid": False, "findings": [{"code": exc.code, "message": str(exc)}]}
            counts["valid"] += int(rep["valid"])
            dst.write(json.dumps(rep, sort_keys=True) + "\n")
    man.outputs.append("validation.jsonl")
    man.write(out)
    click.echo(json.dumps(counts, sort_keys=True))


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Class table (CSV).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Also write the full report as JSON.")
def dedup(in_path: str, out_path: str, json_path: str | None) -> None:
    """Group graphs into isomorphism classes."""
    from .canon import deduplicate

    rep = deduplicate(list(iter_jsonl(in_path)))
    rep.write_csv(out_path)
    if json_path:
        rep.write_json(json_path)
    click.echo(json.dumps({"graphs": rep.total, "classes": len(rep.classes)}))


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Feature table (CSV).")
def features(in_path: str, out_path: str) -> None:
    """Space Syntax feature vector per graph."""
    from .syntax import GF_COLUMNS, graph_features

    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *GF_COLUMNS])
        n = 0
        for g in iter_jsonl(in_path):
            v = graph_features(g).as_array()
            w.writerow([g.id, *(format(float(x), ".10g") for x in v)])
            n += 1
    click.echo(json.dumps({"graphs": n}))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--n", "n_records", type=int, default=None, help="Number of records.")
@click.option("--seed", type=int, default=None)
@click.option("--templates", "n_templates", type=int, default=None, help="Number of distinct plan templates.")
@click.option("--noise-sd", type=float, default=None)
@config_opt
@out_opt
def synth(n_records, seed, n_templates, noise_sd, config_path, out_dir) -> None:
    """Generate a synthetic corpus with a known rent function."""
    from .synth import SynthConfig, generate_corpus, write_corpus

    cfg = load_config(config_path)
    sc = dict(cfg.get("synth", {}))
    for key, val in (("n_records", n_records), ("seed", seed), ("n_templates", n_templates), ("noise_sd", noise_sd)):
        if val is not None:
            sc[key] = val
    scfg = SynthConfig.from_dict(sc)
    out = _out_dir(out_dir)
    ds, gt = generate_corpus(scfg)
    paths = write_corpus(out, ds, gt, scfg)
    man = RunManifest("synth", {"synth": asdict(scfg)}, seeds={"synth": scfg.seed})
    man.outputs += [p.name for p in paths.values()]
    man.write(out)
    click.echo(json.dumps({"records": len(ds)}))


# ---------------------------------------------------------------------------
# training and scoring
# ---------------------------------------------------------------------------


@cli.command()
@graphs_opt
@tabular_opt
@config_opt
@out_opt
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@max_rent_opt
def train(graphs, tabular, config_path, out_dir, epochs, seed, max_rent) -> None:
    """Train the joint model on all records; checkpoints every interval."""
    from .gcn import train as run_train

    cfg = load_config(config_path)
    tc = _train_config(cfg, epochs, seed)
    ds = _load_dataset(graphs, tabular, max_rent)
    out = _out_dir(out_dir)
    cks = run_train(ds, tc, checkpoint_dir=out / "checkpoints")
    with open(out / "train_history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_rmse"])
        for ep, v in enumerate(cks[-1].history if cks else [], 1):
            w.writerow([ep, format(v, ".10g")])
    man = RunManifest("train", {"train": asdict(tc)}, seeds={"train": tc.seed})
    man.add_input(graphs)
    man.add_input(tabular)
    man.outputs += ["train_history.csv"] + [f"checkpoints/epoch_{c.epoch:05d}.json" for c in cks]
    man.write(out)
    click.echo(json.dumps({"checkpoints": [c.epoch for c in cks], "records": len(ds)}))


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Checkpoint JSON.")
@graphs_opt
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Scores (CSV).")
def score(model_path, graphs, out_path) -> None:
    """Raw FPV and deviation score per graph."""
    from .gcn import Checkpoint, fpv_deviation, fpv_scores

    model = Checkpoint.load(model_path).model
    gs = read_jsonl(graphs)
    raw = fpv_scores(model, gs)
    dev = fpv_deviation(raw) if len(raw) > 1 and raw.std() > 0 else np.full(len(raw), np.nan)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "raw_fpv", "deviation"])
        for g, r, d in zip(gs, raw, dev):
            w.writerow([g.id, format(float(r), ".10g"), format(float(d), ".10g")])
    click.echo(json.dumps({"graphs": len(gs)}))


# ---------------------------------------------------------------------------
# semi-cross-validation and comparison
# ---------------------------------------------------------------------------


@cli.command()
@graphs_opt
@tabular_opt
@config_opt
@out_opt
@click.option("--k", type=int, default=None, help="Number of folds.")
@click.option("--split", "split_path", type=click.Path(exists=True, dir_okay=False), help="Reuse a saved split manifest.")
@click.option("--save-checkpoints/--no-save-checkpoints", default=False)
@max_rent_opt
def cv(graphs, tabular, config_path, out_dir, k, split_path, save_checkpoints, max_rent) -> None:
    """Semi-cross-validation over checkpoint epochs."""
    from .dataset import load_split_manifest, save_split_manifest, split_kfold
    from .evaluation import semi_cross_validate
    from .report import epoch_curve

    cfg = load_config(config_path)
    tc = _train_config(cfg)
    cv_cfg = cfg.get("cv", {})
    k = k or int(cv_cfg.get("k", 10))
    split_seed = int(cv_cfg.get("split_seed", tc.seed))
    ds = _load_dataset(graphs, tabular, max_rent)
    out = _out_dir(out_dir)
    folds = load_split_manifest(split_path, ds) if split_path else split_kfold(len(ds), k, split_seed)
    save_split_manifest(out / "split.json", ds, folds, split_seed)
    res = semi_cross_validate(ds, tc, folds=folds, checkpoint_dir=(out / "checkpoints") if save_checkpoints else None)
    res.save(out / "cv_result.json")
    res.write_epoch_csv(out / "epoch_rmse.csv")
    epoch_curve(res.epochs, res.rmse, out / "epoch_rmse.svg", best=res.best_epoch)
    man = RunManifest("cv", {"train": asdict(tc), "cv": {"k": len(folds), "split_seed": split_seed}}, seeds={"train": tc.seed, "split": split_seed})
    for p in (graphs, tabular, split_path):
        man.add_input(p)
    man.outputs += ["split.json", "cv_result.json", "epoch_rmse.csv", "epoch_rmse.svg"]
    man.write(out)
    click.echo(json.dumps({"best_epoch": res.best_epoch, "failed_folds": sorted(res.failed)}))


@cli.command()
@graphs_opt
@tabular_opt
@click.option("--cv", "cv_path", required=True, type=click.Path(exists=True, dir_okay=False), help="cv_result.json from `fpv cv`.")
@config_opt
@out_opt
@click.option("--epoch", type=int, default=None, help="Override the selected epoch.")
@click.option("--gf-noise-seed", type=int, default=None, help="Replace the GF block with standard-normal noise columns.")
@click.option("--alpha", type=float, default=None)
@max_rent_opt
def compare(graphs, tabular, cv_path, config_path, out_dir, epoch, gf_noise_seed, alpha, max_rent) -> None:
    """Baseline vs GF vs FPV regressions on the semi-CV test folds."""
    from .evaluation import SemiCvResult, compare_models
    from .report import fold_boxplots
    from .syntax import GF_MODEL_COLUMNS

    cfg = load_config(config_path)
    cc = cfg.get("compare", {})
    alpha = alpha if alpha is not None else float(cc.get("alpha", 0.05))
    gf_noise_seed = gf_noise_seed if gf_noise_seed is not None else cc.get("gf_noise_seed")
    ds = _load_dataset(graphs, tabular, max_rent)
    res = SemiCvResult.load(cv_path)
    if gf_noise_seed is not None:
        n_cols = int(cc.get("gf_noise_columns", len(GF_MODEL_COLUMNS)))
        noise = np.random.default_rng(int(gf_noise_seed)).standard_normal((len(ds), n_cols))
        gf = (noise, [f"noise{j}" for j in range(n_cols)])
    else:
        from .evaluation import gf_block

        gf = gf_block(ds, tuple(cc.get("gf_columns", GF_MODEL_COLUMNS)))
    outcome = compare_models(ds, res, epoch, gf, alpha)
    out = _out_dir(out_dir)
    outcome.write_fold_csv(out / "fold_metrics.csv")
    outcome.write_pairs_csv(out / "pairs.csv")
    outcome.write_coefficients_csv(out / "coefficients.csv")
    fold_boxplots(outcome.fold_metrics, out / "fold_metrics.svg")
    seeds = {} if gf_noise_seed is None else {"gf_noise": int(gf_noise_seed)}
    man = RunManifest("compare", {"compare": {"alpha": alpha, "epoch": outcome.epoch, "gf_noise_seed": gf_noise_seed}}, seeds=seeds)
    for p in (graphs, tabular, cv_path):
        man.add_input(p)
    man.outputs += ["fold_metrics.csv", "pairs.csv", "coefficients.csv", "fold_metrics.svg"]
    man.write(out)
    click.echo(
        json.dumps(
            {
                "epoch": outcome.epoch,
                "mean_rmse": {m: round(outcome.mean("rmse", m), 6) for m in ("baseline", "gf", "fpv")},
                "fpv_beats_baseline": outcome.fpv_beats_baseline(),
                "gf_differs_from_baseline": outcome.gf_differs_from_baseline(),
            },
            sort_keys=True,
        )
    )


# ---------------------------------------------------------------------------
# explanation
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Checkpoint JSON.")
@graphs_opt
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Attributions (JSONL).")
@click.option("--steps", type=int, default=200, show_default=True)
@click.option("--unique/--all", default=True, show_default=True, help="Explain one representative per isomorphism class.")
def explain(model_path, graphs, out_path, steps, unique) -> None:
    """Integrated-gradients attributions per plan."""
    from .attribution import integrated_gradients, write_attributions_jsonl
    from .canon import deduplicate
    from .gcn import Checkpoint

    model = Checkpoint.load(model_path).model
    gs = read_jsonl(graphs)
    if unique:
        gs = [c.representative for c in deduplicate(gs).classes]
    attrs = [integrated_gradients(model, g, steps) for g in gs]
    write_attributions_jsonl(attrs, out_path)
    worst = max((a.completeness_gap for a in attrs), default=0.0)
    click.echo(json.dumps({"plans": len(attrs), "max_completeness_gap": worst}))


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Attributions (JSONL).")
@out_opt
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--separate/--joint", default=False, show_default=True, help="Standardise nodes and edges separately.")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), help="ground_truth.json for the planted-effect scorecard.")
@click.option("--scores", "scores_path", type=click.Path(exists=True, dir_okay=False), help="Score CSV aligned with the truth ids.")
def anom(in_path, out_dir, alpha, separate, truth_path, scores_path) -> None:
    """Analysis of means over room and connection types."""
    from .attribution import aggregate_by_type, anom as run_anom, planted_effect_report, read_attributions_jsonl, standardize
    from .report import anom_chart

    attrs = [standardize(a, separate) for a in read_attributions_jsonl(in_path)]
    res = run_anom(aggregate_by_type(attrs), alpha)
    out = _out_dir(out_dir)
    res.write_csv(out / "anom.csv")
    anom_chart(res, out / "anom.svg")
    man = RunManifest("anom", {"anom": {"alpha": alpha, "separate": separate}})
    man.add_input(in_path)
    man.outputs += ["anom.csv", "anom.svg"]
    summary = {"groups": len(res.rows), "significant": [r.group for r in res.rows if r.significant]}
    if truth_path:
        if not scores_path:
            raise click.UsageError("--truth needs --scores")
        truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
        with open(scores_path, encoding="utf-8") as fh:
            raw = {row["id"]: float(row["raw_fpv"]) for row in csv.DictReader(fh)}
        util = _truth_utility(truth)
        ids = [i for i in util if i in raw]
        card = planted_effect_report(truth["planted"], res, [util[i] for i in ids], [raw[i] for i in ids])
        (out / "scorecard.json").write_text(json.dumps(asdict(card), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        man.add_input(truth_path)
        man.add_input(scores_path)
        man.outputs.append("scorecard.json")
        summary["sign_agreement"] = card.sign_agreement
        summary["spearman"] = card.spearman
    man.write(out)
    click.echo(json.dumps(summary, sort_keys=True))


# ---------------------------------------------------------------------------
# whole pipeline
# ---------------------------------------------------------------------------


@cli.command()
@graphs_opt
@tabular_opt
@config_opt
@out_opt
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), help="ground_truth.json for the planted-effect scorecard.")
@max_rent_opt
def report(graphs, tabular, config_path, out_dir, truth_path, max_rent) -> None:
    """Semi-CV, comparison, final model, explanations and ANOM in one run."""
    from .attribution import aggregate_by_type, anom as run_anom, integrated_gradients, planted_effect_report, standardize, write_attributions_jsonl
    from .canon import deduplicate
    from .dataset import save_split_manifest, split_kfold
    from .evaluation import compare_models, gf_block, semi_cross_validate, train_final
    from .gcn import fpv_deviation, fpv_scores
    from .report import anom_chart, epoch_curve, fold_boxplots, fpv_histogram
    from .syntax import GF_MODEL_COLUMNS

    cfg = load_config(config_path)
    tc = _train_config(cfg)
    cv_cfg, cc, ec, ac = (cfg.get(s, {}) for s in ("cv", "compare", "explain", "anom"))
    k = int(cv_cfg.get("k", 10))
    split_seed = int(cv_cfg.get("split_seed", tc.seed))
    ds = _load_dataset(graphs, tabular, max_rent)
    out = _out_dir(out_dir)
    man = RunManifest("report", cfg, seeds={"train": tc.seed, "split": split_seed})
    man.add_input(graphs)
    man.add_input(tabular)

    folds = split_kfold(len(ds), k, split_seed)
    save_split_manifest(out / "split.json", ds, folds, split_seed)
    res = semi_cross_validate(ds, tc, folds=folds)
    res.save(out / "cv_result.json")
    res.write_epoch_csv(out / "epoch_rmse.csv")
    epoch_curve(res.epochs, res.rmse, out / "epoch_rmse.svg", best=res.best_epoch)

    if cc.get("gf_noise_seed") is not None:
        n_cols = int(cc.get("gf_noise_columns", len(GF_MODEL_COLUMNS)))
        gf = (np.random.default_rng(int(cc["gf_noise_seed"])).standard_normal((len(ds), n_cols)), [f"noise{j}" for j in range(n_cols)])
        man.seeds["gf_noise"] = int(cc["gf_noise_seed"])
    else:
        gf = gf_block(ds, tuple(cc.get("gf_columns", GF_MODEL_COLUMNS)))
    outcome = compare_models(ds, res, None, gf, float(cc.get("alpha", 0.05)))
    outcome.write_fold_csv(out / "fold_metrics.csv")
    outcome.write_pairs_csv(out / "pairs.csv")
    outcome.write_coefficients_csv(out / "coefficients.csv")
    fold_boxplots(outcome.fold_metrics, out / "fold_metrics.svg")

    ck = train_final(ds, tc, outcome.epoch)
    ck.save(out / "final_model.json")
    raw = fpv_scores(ck.model, ds.graphs)
    dev = fpv_deviation(raw)
    with open(out / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "raw_fpv", "deviation"])
        for g, r, d in zip(ds.graphs, raw, dev):
            w.writerow([g.id, format(float(r), ".10g"), format(float(d), ".10g")])
    fpv_histogram(dev, out / "fpv_deviation.svg")

    plans = [c.representative for c in deduplicate(ds.graphs).classes]
    attrs = [integrated_gradients(ck.model, g, int(ec.get("steps", 200))) for g in plans]
    write_attributions_jsonl(attrs, out / "attributions.jsonl")
    table = aggregate_by_type([standardize(a, bool(ac.get("separate", False))) for a in attrs])
    anom_res = run_anom(table, float(ac.get("alpha", 0.05)))
    anom_res.write_csv(out / "anom.csv")
    anom_chart(anom_res, out / "anom.svg")
    man.outputs += [
        "split.json", "cv_result.json", "epoch_rmse.csv", "epoch_rmse.svg", "fold_metrics.csv", "pairs.csv",
        "coefficients.csv", "fold_metrics.svg", "final_model.json", "scores.csv", "fpv_deviation.svg",
        "attributions.jsonl", "anom.csv", "anom.svg",
    ]
    summary = {"best_epoch": outcome.epoch, "fpv_beats_baseline": outcome.fpv_beats_baseline()}
    if truth_path:
        truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
        util = _truth_utility(truth)
        card = planted_effect_report(truth["planted"], anom_res, [util[i] for i in ds.ids], raw)
        (out / "scorecard.json").write_text(json.dumps(asdict(card), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        man.add_input(truth_path)
        man.outputs.append("scorecard.json")
        summary.update(sign_agreement=card.sign_agreement, spearman=card.spearman)
    man.write(out)
    click.echo(json.dumps(summary, sort_keys=True))


# ---------------------------------------------------------------------------
# entry point with machine-readable errors
# ---------------------------------------------------------------------------


def _emit_error(code: str, message: str, exit_code: int) -> int:
    click.echo(json.dumps({"error": code, "message": message}, sort_keys=True), err=True)
    return exit_code


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="fpv", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return _emit_error("Aborted", "aborted", EXIT_FAILURE)
    except click.UsageError as exc:
        return _emit_error(type(exc).__name__, exc.format_message(), EXIT_USAGE)
    except click.ClickException as exc:
        return _emit_error(type(exc).__name__, exc.format_message(), EXIT_FAILURE)
    except Exception as exc:  # surfaced to the caller as JSON
        logger.debug("command failed", exc_info=True)
        return _emit_error(getattr(exc, "code", type(exc).__name__), str(exc), EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
