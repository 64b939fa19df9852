"""Training schemes: BASIC, POSE, SIM, POSE+SIM, ADV and ADV+SIM.

All schemes share the classification loss.  POSE adds a pose-bin
cross-entropy through the pose head, SIM adds a contrastive loss on feature
pairs and ADV adds the classification loss of signal-domain FGSM images
regenerated against the current parameters at every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .imaging import ImagingConfig
from .model import ATRModel, N_POSE_BINS, pose_bin
from .nncore import Adam, SGD, Tensor
from .nncore import functional as F
from .rfsim import ConfigError, FrequencyHistory, RadarConfig

SCHEMES = ("BASIC", "POSE", "SIM", "POSE+SIM", "ADV", "ADV+SIM")
METRIC_FIELDS = ("epoch", "scheme", "loss", "clf_acc", "pose_acc", "sim_loss", "adv_loss")


class TrainingDiverged(FloatingPointError):
    """Non-finite loss; carries the epoch and batch index where it happened."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


# --- data -------------------------------------------------------------------

@dataclass
class DatasetRecord:
    image: np.ndarray
    signal: FrequencyHistory | None
    label: int
    theta: float
    size_scalar: float
    target_id: int
    record_id: int = 0


class Dataset:
    """Column store of records.  ``signals`` is (n, K, N_p) complex64 or None."""

    def __init__(self, images, labels, thetas, sizes, target_ids, signals=None,
                 geometries=None, radar: RadarConfig | None = None,
                 imaging_config: ImagingConfig = ImagingConfig(), record_ids=None):
        self.images = np.asarray(images, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.thetas = np.asarray(thetas, dtype=np.float64)
        self.sizes = np.asarray(sizes, dtype=np.float64)
        self.target_ids = np.asarray(target_ids, dtype=np.int64)
        n = len(self.images)
        self.record_ids = (np.arange(n) if record_ids is None
                           else np.asarray(record_ids, dtype=np.int64))
        self.signals = None if signals is None else np.asarray(signals)
        self.geometries = None if geometries is None else list(geometries)
        self.radar = radar
        self.imaging_config = imaging_config
        for name in ("labels", "thetas", "sizes", "target_ids", "record_ids"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        if self.signals is not None and (self.geometries is None or radar is None
                                         or len(self.signals) != n or len(self.geometries) != n):
            raise ValueError("signals need one geometry per record and a radar config")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def has_signals(self) -> bool:
        return self.signals is not None

    def history(self, i: int) -> FrequencyHistory:
        if self.signals is None:
            raise ConfigError("dataset does not retain frequency histories")
        return FrequencyHistory(self.signals[i], self.radar, self.geometries[i])

    def __getitem__(self, i: int) -> DatasetRecord:
        return DatasetRecord(
            image=self.images[i],
            signal=self.history(i) if self.signals is not None else None,
            label=int(self.labels[i]),
            theta=float(self.thetas[i]),
            size_scalar=float(self.sizes[i]),
            target_id=int(self.target_ids[i]),
            record_id=int(self.record_ids[i]),
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.images[idx], self.labels[idx], self.thetas[idx], self.sizes[idx],
            self.target_ids[idx],
            signals=None if self.signals is None else self.signals[idx],
            geometries=None if self.geometries is None else [self.geometries[i] for i in idx],
            radar=self.radar, imaging_config=self.imaging_config,
            record_ids=self.record_ids[idx],
        )

    @classmethod
    def from_records(cls, records: list[DatasetRecord],
                     imaging_config: ImagingConfig = ImagingConfig()) -> "Dataset":
        if not records:
            raise ValueError("no records")
        with_sig = all(r.signal is not None for r in records)
        return cls(
            np.stack([r.image for r in records]),
            [r.label for r in records], [r.theta for r in records],
            [r.size_scalar for r in records], [r.target_id for r in records],
            signals=np.stack([r.signal.samples for r in records]) if with_sig else None,
            geometries=[r.signal.geometry for r in records] if with_sig else None,
            radar=records[0].signal.radar if with_sig else None,
            imaging_config=imaging_config,
            record_ids=[r.record_id for r in records],
        )


# --- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    pose: bool = False
    sim: bool = False
    adv: bool = False
    lambda_pose: float = 1.0
    lambda_sim: float = 1.0
    lambda_adv: float = 1.0
    # absolute FGSM step; None derives it from the training signals
    epsilon: float | None = None
    epsilon_frac: float = 0.05
    size_tol: float = 0.5
    pose_tol: float = math.radians(10.0)
    similar_fraction: float = 0.5
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 12
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        weights = (self.lambda_pose, self.lambda_sim, self.lambda_adv, self.epsilon_frac)
        if min(weights) < 0 or (self.epsilon is not None and self.epsilon < 0):
            raise ConfigError("loss weights and epsilon must be non-negative")
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("need epochs >= 1 and batch_size >= 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def for_scheme(cls, scheme: str, **overrides) -> "TrainConfig":
        scheme = scheme.upper()
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")
        parts = set(scheme.split("+"))
        return cls(pose="POSE" in parts, sim="SIM" in parts, adv="ADV" in parts, **overrides)

    @property
    def scheme(self) -> str:
        parts = [name for flag, name in ((self.adv, "ADV"), (self.pose, "POSE"),
                                         (self.sim, "SIM")) if flag]
        return "+".join(parts) or "BASIC"


# --- losses ------------------------------------------------------------------------

def circular_distance(a, b):
    """Smallest absolute angle between ``a`` and ``b`` (radians)."""
    d = np.mod(np.asarray(a, dtype=np.float64) - b, 2 * math.pi)
    return np.minimum(d, 2 * math.pi - d)


def similarity_labels(labels_a, labels_b, sizes_a, sizes_b, thetas_a, thetas_b,
                      size_tol: float = 0.5, pose_tol: float = math.radians(10.0)) -> np.ndarray:
    """Vectorized similarity label: 0 for similar pairs, 1 otherwise."""
    same = ((np.asarray(labels_a) == np.asarray(labels_b))
            & (np.abs(np.asarray(sizes_a) - np.asarray(sizes_b)) <= size_tol)
            & (circular_distance(thetas_a, thetas_b) <= pose_tol))
    return np.where(same, 0, 1).astype(np.int64)


def similarity_label(a: DatasetRecord, b: DatasetRecord, size_tol: float = 0.5,
                     pose_tol: float = math.radians(10.0)) -> int:
    return int(similarity_labels(a.label, b.label, a.size_scalar, b.size_scalar,
                                 a.theta, b.theta, size_tol, pose_tol))


def loss_sim(h1, h2, s, margin: float = 1.0) -> Tensor:
    """Contrastive loss ``(1-s) d^2 + s max(margin - d, 0)^2`` averaged over pairs."""
    h1 = h1 if isinstance(h1, Tensor) else Tensor(np.atleast_2d(np.asarray(h1, dtype=np.float64)))
    h2 = h2 if isinstance(h2, Tensor) else Tensor(np.atleast_2d(np.asarray(h2, dtype=np.float64)))
    return F.contrastive_loss(h1, h2, np.atleast_1d(s), margin)


def loss_pose(pose_probs, theta) -> float:
    """Negative log-probability of the true pose bin, averaged over rows."""
    p = np.atleast_2d(np.asarray(pose_probs, dtype=np.float64))
    bins = np.atleast_1d(pose_bin(np.asarray(theta), p.shape[1]))
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(p[np.arange(len(p)), bins])))


def pose_loss_from_logits(logits: Tensor, thetas) -> Tensor:
    return F.cross_entropy(logits, np.atleast_1d(pose_bin(np.asarray(thetas), N_POSE_BINS)))


# --- signal-domain FGSM -----------------------------------------------------------------

def signal_epsilon(signals: np.ndarray, fraction: float = 0.05) -> float:
    """``fraction`` of the median per-component magnitude (|Re| and |Im| pooled)."""
    s = np.asarray(signals)
    comps = np.concatenate([np.abs(s.real).ravel(), np.abs(s.imag).ravel()])
    return float(fraction * np.median(comps))


def sign_perturbation(grad: np.ndarray, epsilon: float) -> np.ndarray:
    """``epsilon * (sign(Re g) + i sign(Im g))``."""
    return epsilon * (np.sign(grad.real) + 1j * np.sign(grad.imag))


def fgsm_from_gradient(hist: FrequencyHistory, dL_dx: np.ndarray, epsilon: float,
                       cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    """Perturbed image ``g(s + eta)`` for an image-space loss gradient ``dL_dx``.

    Back-projection is linear, so the complex image of ``s + eta`` is formed
    as ``BP(s) + BP(eta)``; ``BP(s)`` is shared with the gradient pass.
    """
    dL_dx = np.asarray(dL_dx, dtype=np.float64)
    if not np.all(np.isfinite(dL_dx)):
        raise FloatingPointError("non-finite image gradient in FGSM")
    x_c = imaging.backproject(hist, cfg)
    grad = imaging.backproject_adjoint(imaging.normalize_backward(x_c, dL_dx, cfg), hist, cfg)
    eta = sign_perturbation(grad, epsilon)
    if epsilon != 0:
        x_c = x_c + imaging.backproject(hist.with_samples(eta), cfg)
    return imaging.normalize(x_c, cfg).astype(np.float32)


def fgsm_signal(record: DatasetRecord, model: ATRModel, epsilon: float,
                cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    """Signal-domain FGSM: perturb the frequency history, then re-image."""
    if record.signal is None:
        raise ConfigError("FGSM in the signal domain needs the record's frequency history")
    _, dx = model.loss_input_gradient(record.image[None], [record.label])
    return fgsm_from_gradient(record.signal, dx[0], epsilon, cfg)


def perturbed_signal(record: DatasetRecord, model: ATRModel, epsilon: float,
                     cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    """``s + eta`` itself (for inspecting the perturbation)."""
    _, dx = model.loss_input_gradient(record.image[None], [record.label])
    grad = imaging.grad_signal(record.signal, dx[0], cfg)
    return np.asarray(record.signal.samples, dtype=np.complex128) + sign_perturbation(grad, epsilon)


# --- batches and the combined objective ---------------------------------------------

@dataclass
class Batch:
    images: np.ndarray
    labels: np.ndarray
    thetas: np.ndarray | None = None
    # contrastive pairs as index arrays into ``images`` plus labels s
    pair_a: np.ndarray | None = None
    pair_b: np.ndarray | None = None
    pair_s: np.ndarray | None = None
    histories: list[FrequencyHistory] | None = None
    imaging_config: ImagingConfig = field(default_factory=ImagingConfig)

    @classmethod
    def from_dataset(cls, data: Dataset, idx, pairs=None, with_signals: bool = False) -> "Batch":
        idx = np.asarray(idx, dtype=np.int64)
        batch = cls(data.images[idx], data.labels[idx], data.thetas[idx],
                    imaging_config=data.imaging_config)
        if pairs is not None:
            batch.pair_a, batch.pair_b, batch.pair_s = pairs
        if with_signals:
            batch.histories = [data.history(i) for i in idx]
        return batch


@dataclass
class LossBreakdown:
    total: float
    clf: float
    pose: float | None = None
    sim: float | None = None
    adv: float | None = None
    clf_correct: int = 0
    pose_correct: int | None = None
    count: int = 0


def total_loss(batch: Batch, model: ATRModel, cfg: TrainConfig, epsilon: float = 0.0,
               backward: bool = False) -> LossBreakdown:
    """L_clf + lambda_pose L_pose + lambda_sim L_sim + lambda_adv L_adv on one batch.

    With ``backward`` the parameter gradients of the total are accumulated
    into the model; otherwise parameters are left untouched.
    """
    if cfg.pose and (batch.thetas is None or model.pose is None):
        raise ConfigError("POSE needs pose labels and a model with a pose head")
    if cfg.sim and batch.pair_a is None:
        raise ConfigError("SIM needs a batch with pair structure")
    if cfg.adv and batch.histories is None:
        raise ConfigError("ADV needs the frequency histories of the batch")

    flags = [p.requires_grad for p in model.parameters()]
    if not backward:
        model.requires_grad_(False)
    try:
        x = Tensor(batch.images[:, None].astype(model.dtype), requires_grad=cfg.adv)
        h = model.extract_features(x)
        z = model.class_logits(h)
        l_clf = F.cross_entropy(z, batch.labels)
        out = LossBreakdown(total=0.0, clf=l_clf.item(), count=len(batch.labels),
                            clf_correct=int(np.sum(z.data.argmax(1) == batch.labels)))
        extra = []
        if cfg.pose:
            zp = model.pose_logits(h)
            l_pose = pose_loss_from_logits(zp, batch.thetas)
            out.pose = l_pose.item()
            out.pose_correct = int(np.sum(zp.data.argmax(1) == pose_bin(batch.thetas)))
            extra.append(l_pose * cfg.lambda_pose)
        if cfg.sim:
            l_sim = F.contrastive_loss(F.take(h, batch.pair_a), F.take(h, batch.pair_b),
                                       batch.pair_s)
            out.sim = l_sim.item()
            extra.append(l_sim * cfg.lambda_sim)
        total = out.clf + sum(t.item() for t in extra)

        if cfg.adv:
            # clean pass first: parameter gradients of L_clf plus dL_clf/dx
            l_clf.backward(retain_graph=bool(extra))
            dx = x.grad[:, 0] * len(batch.labels)  # per-sample loss gradient
            x_adv = np.stack([fgsm_from_gradient(hist, g_i, epsilon, batch.imaging_config)
                              for hist, g_i in zip(batch.histories, dx)])
            if extra:
                _sum_terms(extra).backward()
            z_adv = model.class_logits(model.extract_features(x_adv))
            l_adv = F.cross_entropy(z_adv, batch.labels)
            out.adv = l_adv.item()
            total += cfg.lambda_adv * out.adv
            if backward:
                (l_adv * cfg.lambda_adv).backward()
        elif backward:
            _sum_terms([l_clf] + extra).backward()
        out.total = total
    finally:
        for p, f in zip(model.parameters(), flags):
            p.requires_grad = f
    return out


def _sum_terms(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


# --- pair sampling -------------------------------------------------------------------

class PairSampler:
    """Draws a partner for every anchor: half from the same target at the
    nearest pose, half uniformly at random."""

    def __init__(self, data: Dataset, cfg: TrainConfig):
        self.data = data
        self.cfg = cfg
        self.by_target = {}
        for i, t in enumerate(data.target_ids):
            self.by_target.setdefault(int(t), []).append(i)

    def nearest_pose_partner(self, i: int) -> int:
        group = [j for j in self.by_target[int(self.data.target_ids[i])] if j != i]
        if not group:
            return i
        d = circular_distance(self.data.thetas[group], self.data.thetas[i])
        return group[int(np.argmin(d))]

    def partners(self, anchors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = len(self.data)
        similar = rng.random(len(anchors)) < self.cfg.similar_fraction
        random_pick = rng.integers(0, n - 1, size=len(anchors))
        out = np.empty(len(anchors), dtype=np.int64)
        for k, i in enumerate(anchors):
            if similar[k]:
                out[k] = self.nearest_pose_partner(int(i))
            else:
                out[k] = random_pick[k] + (random_pick[k] >= i)  # any record but i
        return out

    def labels(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = self.data
        return similarity_labels(d.labels[a], d.labels[b], d.sizes[a], d.sizes[b],
                                 d.thetas[a], d.thetas[b], self.cfg.size_tol, self.cfg.pose_tol)


# --- training loop ---------------------------------------------------------------------

@dataclass
class TrainResult:
    model: ATRModel
    metrics: list[dict]
    epsilon: float
    config: TrainConfig


def _optimizer(model: ATRModel, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    return Adam(model.parameters(), lr=cfg.lr)


def _fmt(v):
    return "" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v))


def write_metrics(rows: list[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in METRIC_FIELDS})


def train(data: Dataset, cfg: TrainConfig, log_path: str | Path | None = None,
          progress=None) -> TrainResult:
    """Train a fresh model on ``data``; deterministic for a fixed ``cfg.seed``."""
    if len(data) == 0:
        raise ValueError("empty training set")
    missing = sorted(set(range(4)) - set(np.unique(data.labels).tolist()))
    if missing:
        raise ValueError(f"training set lacks classes {missing}")
    if cfg.adv and not data.has_signals:
        raise ConfigError("ADV training needs the frequency histories")

    rng = np.random.default_rng(cfg.seed)
    model = ATRModel(seed=cfg.seed, pose_head=cfg.pose)
    opt = _optimizer(model, cfg)
    epsilon = 0.0
    if cfg.adv:
        epsilon = cfg.epsilon if cfg.epsilon is not None else signal_epsilon(
            data.signals, cfg.epsilon_frac)
    sampler = PairSampler(data, cfg) if cfg.sim else None
    # with SIM half of every step's images are partners
    per_step = max(1, cfg.batch_size // 2) if cfg.sim else cfg.batch_size

    metrics = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        sums = {"loss": 0.0, "sim": 0.0, "adv": 0.0, "clf_correct": 0, "pose_correct": 0,
                "count": 0, "steps": 0}
        for b, start in enumerate(range(0, len(order), per_step)):
            anchors = order[start:start + per_step]
            if sampler is not None:
                partners = sampler.partners(anchors, rng)
                idx = np.concatenate([anchors, partners])
                n = len(anchors)
                pairs = (np.arange(n), np.arange(n, 2 * n), sampler.labels(anchors, partners))
            else:
                idx, pairs = anchors, None
            batch = Batch.from_dataset(data, idx, pairs, with_signals=cfg.adv)
            opt.zero_grad()
            res = total_loss(batch, model, cfg, epsilon, backward=True)
            if not math.isfinite(res.total):
                raise TrainingDiverged(epoch, b, res.total)
            opt.step()
            sums["loss"] += res.total
            sums["sim"] += res.sim or 0.0
            sums["adv"] += res.adv or 0.0
            sums["clf_correct"] += res.clf_correct
            sums["pose_correct"] += res.pose_correct or 0
            sums["count"] += res.count
            sums["steps"] += 1
        steps, count = sums["steps"], sums["count"]
        row = {
            "epoch": epoch,
            "scheme": cfg.scheme,
            "loss": sums["loss"] / steps,
            "clf_acc": sums["clf_correct"] / count,
            "pose_acc": sums["pose_correct"] / count if cfg.pose else None,
            "sim_loss": sums["sim"] / steps if cfg.sim else None,
            "adv_loss": sums["adv"] / steps if cfg.adv else None,
        }
        metrics.append(row)
        if progress is not None:
            progress(row)
    if log_path is not None:
        write_metrics(metrics, log_path)
    return TrainResult(model, metrics, epsilon, cfg)


def evaluate_accuracy(model: ATRModel, data: Dataset) -> float:
    return float(np.mean(model.predict(data.images) == data.labels))
