"""Semi-cross-validation, best-epoch selection and the baseline / GF / FPV comparison."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import OLS_TABULAR_COLUMNS, Dataset, ols_tabular, split_kfold
from .gcn import Checkpoint, TrainConfig, TrainingDiverged, fpv_deviation, fpv_scores, train
from .stats import ComparisonReport, OlsFit, RegressionError, add_constant, bonferroni_compare, fit_ols
from .syntax import GF_MODEL_COLUMNS, feature_matrix

logger = logging.getLogger(__name__)

MODELS = ("baseline", "gf", "fpv")
METRICS = ("rmse", "adj_r2")


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else format(float(v), ".10g")


# ---------------------------------------------------------------------------
# semi-cross-validation
# ---------------------------------------------------------------------------


@dataclass
class SemiCvResult:
    epochs: list[int]
    folds: list[np.ndarray]
    rmse: np.ndarray  # (k, n_epochs); nan rows for failed folds
    adj_r2: np.ndarray
    test_fpv: dict[tuple[int, int], np.ndarray] = field(repr=False)  # (fold, epoch) -> raw FPV of test records
    failed: dict[int, str] = field(default_factory=dict)

    @property
    def ok_folds(self) -> list[int]:
        return [f for f in range(len(self.folds)) if f not in self.failed]

    def _ok_rows(self, a: np.ndarray) -> np.ndarray:
        if not self.ok_folds:
            raise ValueError("every fold failed: " + "; ".join(self.failed.values()))
        return a[self.ok_folds]

    def mean_rmse(self) -> np.ndarray:
        return self._ok_rows(self.rmse).mean(axis=0)

    def mean_adj_r2(self) -> np.ndarray:
        return self._ok_rows(self.adj_r2).mean(axis=0)

    def fold_best_epochs(self) -> dict[int, int]:
        return {f: self.epochs[int(np.argmin(self.rmse[f]))] for f in self.ok_folds}

    @property
    def best_epoch(self) -> int:
        return select_epoch(self)

    def write_epoch_csv(self, path: str | Path) -> None:
        k = len(self.folds)
        mean, sd = self.mean_rmse(), self.rmse[self.ok_folds].std(axis=0, ddof=1) if len(self.ok_folds) > 1 else None
        r2 = self.mean_adj_r2()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "mean_rmse", "sd_rmse", "mean_adj_r2"] + [f"fold{f}_rmse" for f in range(k)])
            for j, ep in enumerate(self.epochs):
                w.writerow(
                    [ep, _fmt(mean[j]), _fmt(sd[j]) if sd is not None else "nan", _fmt(r2[j])]
                    + [_fmt(self.rmse[f, j]) for f in range(k)]
                )

    def to_dict(self) -> dict:
        return {
            "epochs": list(self.epochs),
            "folds": [f.tolist() for f in self.folds],
            "rmse": self.rmse.tolist(),
            "adj_r2": self.adj_r2.tolist(),
            "test_fpv": {f"{f}:{e}": v.tolist() for (f, e), v in sorted(self.test_fpv.items())},
            "failed": {str(k): v for k, v in sorted(self.failed.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemiCvResult":
        fpv = {}
        for key, v in d["test_fpv"].items():
            f, e = key.split(":")
            fpv[(int(f), int(e))] = np.asarray(v, dtype=np.float64)
        return cls(
            epochs=list(d["epochs"]),
            folds=[np.asarray(f, dtype=np.int64) for f in d["folds"]],
            rmse=np.asarray(d["rmse"], dtype=np.float64),
            adj_r2=np.asarray(d["adj_r2"], dtype=np.float64),
            test_fpv=fpv,
            failed={int(k): v for k, v in d["failed"].items()},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SemiCvResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fpv_ols(fpv_raw: np.ndarray, test: Dataset, compute_vif: bool = False) -> OlsFit:
    """OLS of rent on ``[FPV deviation, tabular, const]`` fitted on the test records themselves."""
    x = np.column_stack([fpv_deviation(fpv_raw), ols_tabular(test.records)])
    return fit_ols(add_constant(x), test.rent, ["fpv", *OLS_TABULAR_COLUMNS, "const"], compute_vif=compute_vif)


def semi_cross_validate(
    ds: Dataset,
    cfg: TrainConfig,
    k: int = 10,
    folds: Sequence[np.ndarray] | None = None,
    split_seed: int | None = None,
    checkpoint_dir: str | Path | None = None,
) -> SemiCvResult:
    """Train on k-1 folds, then at every checkpoint score the held-out fold and fit its OLS."""
    if folds is None:
        folds = split_kfold(len(ds), k, cfg.seed if split_seed is None else split_seed)
    folds = [np.asarray(f, dtype=np.int64) for f in folds]
    epochs = list(range(cfg.checkpoint_interval, cfg.epochs + 1, cfg.checkpoint_interval))
    if not epochs:
        raise ValueError("no checkpoint falls inside the training run")
    rmse = np.full((len(folds), len(epochs)), np.nan)
    adj = np.full_like(rmse, np.nan)
    test_fpv: dict[tuple[int, int], np.ndarray] = {}
    failed: dict[int, str] = {}
    everything = np.arange(len(ds))
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(everything, test_idx)
        test = ds.subset(test_idx)
        fold_dir = None if checkpoint_dir is None else Path(checkpoint_dir) / f"fold{f:02d}"
        try:
            cks = train(ds.subset(train_idx), cfg, checkpoint_dir=fold_dir)
            for j, ck in enumerate(cks):
                raw = fpv_scores(ck.model, test.graphs)
                fit = fpv_ols(raw, test)
                test_fpv[(f, ck.epoch)] = raw
                rmse[f, j], adj[f, j] = fit.rmse, fit.adj_r2
        except (TrainingDiverged, RegressionError, ValueError) as exc:
            logger.warning("fold %d failed: %s", f, exc)
            failed[f] = f"{type(exc).__name__}: {exc}"
            rmse[f], adj[f] = np.nan, np.nan
        else:
            logger.info("fold %d best epoch %d", f, epochs[int(np.argmin(rmse[f]))])
    if len(failed) == len(folds):
        logger.warning("every fold failed")
    return SemiCvResult(epochs, folds, rmse, adj, test_fpv, failed)


def select_epoch(r: SemiCvResult | dict[int, float]) -> int:
    """Epoch with the smallest mean test RMSE; ties go to the earliest epoch.

    Accepts a ``SemiCvResult`` or a plain ``{epoch: mean_rmse}`` mapping.
    """
    if isinstance(r, SemiCvResult):
        curve = dict(zip(r.epochs, r.mean_rmse()))
    else:
        curve = dict(r)
    if not curve:
        raise ValueError("no evaluated epochs")
    return min(sorted(curve), key=lambda e: curve[e])


# ---------------------------------------------------------------------------
# model comparison
# ---------------------------------------------------------------------------


@dataclass
class CoefficientSummary:
    model: str
    variable: str
    mean: float
    sd: float
    p_mean: float
    neg_log10_p_mean: float
    vif_mean: float


@dataclass
class ComparisonOutcome:
    epoch: int
    fold_metrics: dict[str, dict[str, np.ndarray]]  # metric -> model -> per-fold
    per_metric: ComparisonReport
    joint: ComparisonReport
    coefficients: list[CoefficientSummary]

    def mean(self, metric: str, model: str) -> float:
        return float(np.mean(self.fold_metrics[metric][model]))

    def fpv_beats_baseline(self, family: str = "per_metric") -> bool:
        rep = self.per_metric if family == "per_metric" else self.joint
        pt = rep.find("rmse", "baseline", "fpv")
        return pt.significant and self.mean("rmse", "fpv") < self.mean("rmse", "baseline")

    def gf_differs_from_baseline(self, family: str = "per_metric") -> bool:
        rep = self.per_metric if family == "per_metric" else self.joint
        return rep.find("rmse", "baseline", "gf").significant

    def write_fold_csv(self, path: str | Path) -> None:
        n = len(next(iter(self.fold_metrics["rmse"].values())))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "model", "rmse", "adj_r2"])
            for f in range(n):
                for m in MODELS:
                    w.writerow([f, m, _fmt(self.fold_metrics["rmse"][m][f]), _fmt(self.fold_metrics["adj_r2"][m][f])])

    def write_pairs_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["family", "metric", "model_a", "model_b", "mean_diff", "t", "p", "threshold", "significant"])
            for rep in (self.per_metric, self.joint):
                for pt in rep.pairs:
                    w.writerow(
                        [rep.family, pt.metric, pt.model_a, pt.model_b, _fmt(pt.mean_diff), _fmt(pt.t), _fmt(pt.p), _fmt(pt.threshold), int(pt.significant)]
                    )

    def write_coefficients_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "variable", "coef_mean", "coef_sd", "p_mean", "neg_log10_p_mean", "vif_mean"])
            for c in self.coefficients:
                w.writerow([c.model, c.variable, _fmt(c.mean), _fmt(c.sd), _fmt(c.p_mean), _fmt(c.neg_log10_p_mean), _fmt(c.vif_mean)])


def gf_block(ds: Dataset, columns: Sequence[str] = GF_MODEL_COLUMNS) -> tuple[np.ndarray, list[str]]:
    return feature_matrix(ds.graphs, columns), list(columns)


def _summarize(model: str, fits: list[OlsFit]) -> list[CoefficientSummary]:
    out = []
    for j, name in enumerate(fits[0].names):
        coef = np.array([f.coefficients[j] for f in fits])
        out.append(
            CoefficientSummary(
                model=model,
                variable=name,
                mean=float(coef.mean()),
                sd=float(coef.std(ddof=1)) if len(coef) > 1 else 0.0,
                p_mean=float(np.mean([f.p_values[j] for f in fits])),
                neg_log10_p_mean=float(np.mean([f.neg_log10_p[j] for f in fits])),
                vif_mean=float(np.mean([f.vif[j] for f in fits])),
            )
        )
    return out


def compare_models(
    ds: Dataset,
    cv: SemiCvResult,
    epoch: int | None = None,
    gf: tuple[np.ndarray, Sequence[str]] | None = None,
    alpha: float = 0.05,
) -> ComparisonOutcome:
    """Baseline, GF and FPV OLS fitted on every test fold of the semi-CV split.

    ``gf`` overrides the graph-feature block as ``(matrix aligned with ds, names)``;
    by default the selected Space Syntax columns are used. Failed folds are
    dropped for all three models so the design stays paired.
    """
    epoch = select_epoch(cv) if epoch is None else epoch
    if epoch not in cv.epochs:
        raise ValueError(f"epoch {epoch} was not evaluated")
    gmat, gnames = gf_block(ds) if gf is None else (np.asarray(gf[0], dtype=np.float64), list(gf[1]))
    if len(gmat) != len(ds):
        raise ValueError("GF block is not aligned with the dataset")
    tab_names = list(OLS_TABULAR_COLUMNS)
    fits: dict[str, list[OlsFit]] = {m: [] for m in MODELS}
    for f in cv.ok_folds:
        idx = cv.folds[f]
        test = ds.subset(idx)
        tab = ols_tabular(test.records)
        fits["baseline"].append(fit_ols(add_constant(tab), test.rent, tab_names + ["const"]))
        fits["gf"].append(fit_ols(add_constant(np.column_stack([tab, gmat[idx]])), test.rent, tab_names + gnames + ["const"]))
        fits["fpv"].append(fpv_ols(cv.test_fpv[(f, epoch)], test, compute_vif=True))
    metrics = {
        "rmse": {m: np.array([x.rmse for x in fits[m]]) for m in MODELS},
        "adj_r2": {m: np.array([x.adj_r2 for x in fits[m]]) for m in MODELS},
    }
    coefs = [c for m in MODELS for c in _summarize(m, fits[m])]
    return ComparisonOutcome(
        epoch=epoch,
        fold_metrics=metrics,
        per_metric=bonferroni_compare(metrics, alpha, "per_metric"),
        joint=bonferroni_compare(metrics, alpha, "joint"),
        coefficients=coefs,
    )


# ---------------------------------------------------------------------------
# full-data model at the chosen epoch
# ---------------------------------------------------------------------------


def train_final(ds: Dataset, cfg: TrainConfig, epoch: int, checkpoint_dir: str | Path | None = None) -> Checkpoint:
    """Retrain on all records, stopping at ``epoch`` (which must be a checkpoint multiple)."""
    if epoch % cfg.checkpoint_interval:
        raise ValueError("epoch must be a multiple of the checkpoint interval")
    return train(ds, replace(cfg, epochs=epoch), checkpoint_dir=checkpoint_dir)[-1]
