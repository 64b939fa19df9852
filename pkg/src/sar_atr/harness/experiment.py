"""Cross-validation over training schemes, angle-binned evaluation and the
summary table."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import robustness
from ..model import ATRModel
from ..training import Dataset, TrainConfig, train, write_metrics
from .config import BIN_NAMES, DEFAULT_ANGLE_BINS, ExperimentConfig

REPORT_FIELDS = ("scheme", "accuracy_mean", "accuracy_std", "rho_mean", "rho_std")
EVAL_FIELDS = ("sample_id", "target_id", "theta", "true_class", "pred_class", "success",
               "iterations", "norm_ratio")
BIN_FIELDS = ("scheme", "bin", "lo_deg", "hi_deg", "count", "accuracy", "rho", "n_success")
SCHEME_ORDER = ("BASIC", "POSE", "SIM", "POSE+SIM", "ADV", "ADV+SIM")
# Full-scale reference values (715k images), printed for comparison only.
REFERENCE_ROW = ("BASIC", 0.896, 0.011, 0.0201, 0.0011)


class FoldError(ValueError):
    """A fold cannot be trained or evaluated (e.g. a class is missing)."""


def train_config(cfg: ExperimentConfig, scheme: str, seed: int | None = None) -> TrainConfig:
    t = cfg.train
    return TrainConfig.for_scheme(
        scheme, lambda_pose=t.lambda_pose, lambda_sim=t.lambda_sim, lambda_adv=t.lambda_adv,
        epsilon_frac=t.epsilon_frac, size_tol=t.size_tol, pose_tol=math.radians(t.pose_tol_deg),
        optimizer=t.optimizer, lr=t.lr, momentum=t.momentum, epochs=t.epochs,
        batch_size=t.batch_size, seed=t.seed if seed is None else seed)


# --- folds -------------------------------------------------------------------------

def fold_assignment(target_ids, labels, folds: int, seed: int) -> dict[int, int]:
    """Map every target to a fold, dealing each class's targets round-robin."""
    target_ids = np.asarray(target_ids)
    labels = np.asarray(labels)
    cls_of = {}
    for t, y in zip(target_ids.tolist(), labels.tolist()):
        if cls_of.setdefault(t, y) != y:
            raise FoldError(f"target {t} carries more than one class label")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    assignment, offset = {}, 0
    for y in sorted(set(cls_of.values())):
        members = sorted(t for t, c in cls_of.items() if c == y)
        for k, t in enumerate(rng.permutation(members).tolist()):
            assignment[int(t)] = (offset + k) % folds
        offset += len(members)
    return assignment


def split_folds(data: Dataset, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, validation) record indices per fold; split by target."""
    if folds < 2:
        raise FoldError("need at least 2 folds")
    assign = fold_assignment(data.target_ids, data.labels, folds, seed)
    if len(assign) < folds:
        raise FoldError(f"{len(assign)} targets cannot fill {folds} folds")
    fold_of = np.array([assign[int(t)] for t in data.target_ids])
    return [(np.flatnonzero(fold_of != k), np.flatnonzero(fold_of == k)) for k in range(folds)]


def _check_classes(data: Dataset, idx: np.ndarray, what: str):
    missing = sorted(set(range(4)) - set(np.unique(data.labels[idx]).tolist()))
    if missing:
        raise FoldError(f"{what} lacks classes {missing}")


# --- evaluation ---------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    accuracy: float
    rho: float | None
    n_success: int
    n_failed: int
    eval_rows: list[dict]
    metrics: list[dict] = field(default_factory=list)


@dataclass
class CVResult:
    scheme: str
    folds: list[FoldResult]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.accuracy for f in self.folds])

    @property
    def rhos(self) -> np.ndarray:
        return np.array([f.rho for f in self.folds if f.rho is not None])

    @property
    def eval_rows(self) -> list[dict]:
        return [row for f in self.folds for row in f.eval_rows]


def _eval_subset(n: int, limit: int) -> np.ndarray:
    if limit <= 0 or limit >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).round().astype(np.int64))


def evaluate_fold(model: ATRModel, data: Dataset, cfg: ExperimentConfig
                  ) -> tuple[float, robustness.RobustnessSummary, list[dict]]:
    """Held-out accuracy on every record and DeepFool on (a subset of) them."""
    preds = model.predict(data.images)
    accuracy = float(np.mean(preds == data.labels))
    pick = _eval_subset(len(data), cfg.eval_limit)
    summary, results = robustness.evaluate_rho(
        data.images[pick], model, cfg.deepfool_max_iter, cfg.deepfool_overshoot)
    attacked = dict(zip(pick.tolist(), results))
    rows = []
    for i in range(len(data)):
        r = attacked.get(i)
        rows.append({
            "sample_id": int(data.record_ids[i]),
            "target_id": int(data.target_ids[i]),
            "theta": float(data.thetas[i]),
            "true_class": int(data.labels[i]),
            "pred_class": int(preds[i]),
            "success": None if r is None else int(r.success),
            "iterations": None if r is None else r.iterations,
            "norm_ratio": None if r is None or not r.success else r.norm_ratio,
        })
    return accuracy, summary, rows


def run_fold(data: Dataset, scheme: str, cfg: ExperimentConfig, train_idx, val_idx,
             fold: int, out_dir: Path | None = None, progress=None) -> FoldResult:
    _check_classes(data, train_idx, f"fold {fold} training split")
    _check_classes(data, val_idx, f"fold {fold} validation split")
    tcfg = train_config(cfg, scheme, seed=cfg.train.seed * 1000 + fold)
    result = train(data.subset(train_idx), tcfg, progress=progress)
    val = data.subset(val_idx)
    accuracy, summary, rows = evaluate_fold(result.model, val, cfg)
    fr = FoldResult(fold, accuracy, summary.rho, summary.n_success, summary.n_failed,
                    rows, result.metrics)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        result.model.save(out_dir / "model.ckpt", extra={"scheme": scheme, "fold": fold})
        write_metrics(result.metrics, out_dir / "metrics.csv")
        write_rows(out_dir / "eval.csv", EVAL_FIELDS, rows)
        (out_dir / "fold.json").write_text(json.dumps(_fold_json(fr), sort_keys=True) + "\n")
    return fr


def run_cv(data: Dataset, scheme: str, cfg: ExperimentConfig, folds: int | None = None,
           out_dir: str | Path | None = None, fold_indices=None, progress=None) -> CVResult:
    """Train and evaluate one model per fold for ``scheme``."""
    folds = folds or cfg.folds
    splits = split_folds(data, folds, cfg.data.seed)
    chosen = range(folds) if fold_indices is None else fold_indices
    out = None if out_dir is None else Path(out_dir) / _slug(scheme)
    results = []
    for k in chosen:
        tr, va = splits[k]
        fold_dir = None if out is None else out / f"fold{k}"
        results.append(run_fold(data, scheme, cfg, tr, va, k, fold_dir, progress))
    cv = CVResult(scheme, results)
    if out is not None:
        save_cv(cv, out)
    return cv


def _slug(scheme: str) -> str:
    return scheme.lower().replace("+", "_")


def _fold_json(f: FoldResult) -> dict:
    return {"fold": f.fold, "accuracy": f.accuracy, "rho": f.rho,
            "n_success": f.n_success, "n_failed": f.n_failed}


def save_cv(cv: CVResult, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    summary = {"scheme": cv.scheme, "folds": [_fold_json(f) for f in cv.folds]}
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")


def load_cv(out: Path) -> CVResult:
    summary = json.loads((out / "summary.json").read_text())
    folds = []
    for f in summary["folds"]:
        rows = read_rows(out / f"fold{f['fold']}" / "eval.csv")
        folds.append(FoldResult(f["fold"], f["accuracy"], f["rho"], f["n_success"],
                                f["n_failed"], rows))
    return CVResult(summary["scheme"], folds)


# --- tables ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def write_rows(path: Path, fields, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(k)) for k in fields])


def read_rows(path: Path) -> list[dict]:
    def parse(k, v):
        if v == "":
            return None
        if k in ("theta", "norm_ratio"):
            return float(v)
        return int(v)

    with open(path, newline="") as fh:
        return [{k: parse(k, v) for k, v in row.items()} for row in csv.DictReader(fh)]


def mirror_angle_deg(theta) -> np.ndarray:
    """Pose folded onto [0, 180] degrees: min(theta, 2 pi - theta)."""
    t = np.mod(np.asarray(theta, dtype=np.float64), 2 * math.pi)
    return np.degrees(np.minimum(t, 2 * math.pi - t))


def angle_bin_index(theta, edges=DEFAULT_ANGLE_BINS) -> np.ndarray:
    """Bin of each pose; bins are [lo, hi) except the last, which is closed."""
    deg = mirror_angle_deg(theta)
    idx = np.searchsorted(np.asarray(edges[1:-1]), deg, side="right")
    return np.minimum(idx, len(edges) - 2)


def _mean_std(values) -> tuple[float | None, float | None]:
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if len(v) == 0:
        return None, None
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def angle_binned_report(scheme: str, rows: list[dict], edges=DEFAULT_ANGLE_BINS) -> list[dict]:
    """Accuracy and mean DeepFool norm ratio per viewing-geometry bin."""
    thetas = np.array([r["theta"] for r in rows], dtype=np.float64)
    bins = angle_bin_index(thetas, edges) if len(rows) else np.array([], dtype=np.int64)
    out = []
    for b in range(len(edges) - 1):
        members = [r for r, k in zip(rows, bins) if k == b]
        correct = [r["pred_class"] == r["true_class"] for r in members]
        ratios = [r["norm_ratio"] for r in members if r.get("norm_ratio") is not None]
        out.append({
            "scheme": scheme,
            "bin": BIN_NAMES[b] if len(edges) == 6 else str(b),
            "lo_deg": float(edges[b]),
            "hi_deg": float(edges[b + 1]),
            "count": len(members),
            "accuracy": float(np.mean(correct)) if members else None,
            "rho": float(np.mean(ratios)) if ratios else None,
            "n_success": len(ratios) if members else None,
        })
    return out


def summary_rows(results: dict[str, CVResult]) -> list[dict]:
    rows = []
    for scheme in sorted(results, key=lambda s: SCHEME_ORDER.index(s)):
        cv = results[scheme]
        acc_m, acc_s = _mean_std(cv.accuracies.tolist())
        rho_m, rho_s = _mean_std([f.rho for f in cv.folds])
        rows.append({"scheme": scheme, "accuracy_mean": acc_m, "accuracy_std": acc_s,
                     "rho_mean": rho_m, "rho_std": rho_s})
    return rows


def format_table(rows: list[dict]) -> str:
    def pm(m, s, digits):
        return "n/a" if m is None else f"{m:.{digits}f} +/- {s:.{digits}f}"

    lines = [f"{'scheme':<10} {'accuracy':>18} {'robustness (rho)':>22}"]
    for r in rows:
        lines.append(f"{r['scheme']:<10} {pm(r['accuracy_mean'], r['accuracy_std'], 3):>18} "
                     f"{pm(r['rho_mean'], r['rho_std'], 4):>22}")
    name, am, asd, rm, rsd = REFERENCE_ROW
    lines.append("")
    lines.append(f"reference at full scale (715k images): {name} accuracy {am:.3f} +/- {asd:.3f}, "
                 f"rho {rm:.4f} +/- {rsd:.4f}")
    return "\n".join(lines) + "\n"


def report(results: dict[str, CVResult], out_dir: str | Path,
           edges=DEFAULT_ANGLE_BINS) -> list[dict]:
    """Write report.csv, report.txt and angle_bins_<scheme>.csv."""
    if not results:
        raise ValueError("no completed schemes to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summary_rows(results)
    write_rows(out / "report.csv", REPORT_FIELDS, rows)
    (out / "report.txt").write_text(format_table(rows))
    for scheme, cv in results.items():
        write_rows(out / f"angle_bins_{_slug(scheme)}.csv", BIN_FIELDS,
                   angle_binned_report(scheme, cv.eval_rows, edges))
    return rows


def collect_results(out_dir: str | Path) -> dict[str, CVResult]:
    """Every ``<scheme>/summary.json`` below ``out_dir``."""
    out = Path(out_dir)
    results = {}
    for scheme in SCHEME_ORDER:
        d = out / _slug(scheme)
        if (d / "summary.json").exists():
            results[scheme] = load_cv(d)
    return results
