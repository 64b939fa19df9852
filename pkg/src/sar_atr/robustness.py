"""Attack-based robustness evaluation.

DeepFool finds, for each image, a small perturbation that moves it across
the nearest linearized decision boundary; the robustness score is the mean
ratio of that perturbation's norm to the image norm over a dataset.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ATTACK_FIELDS = ("sample_id", "true_class", "pred_class", "adv_class", "iterations", "norm_ratio")


@dataclass
class PerturbationResult:
    r_hat: np.ndarray
    iterations: int
    success: bool
    norm_ratio: float
    orig_class: int = -1
    adv_class: int = -1
    # a true label was supplied and the model already disagreed with it
    already_misclassified: bool = False


@dataclass
class RobustnessSummary:
    rho: float | None  # None when no attack succeeded
    n_success: int
    n_failed: int
    ratios: np.ndarray

    @property
    def defined(self) -> bool:
        return self.rho is not None


class LinearModel:
    """Affine classifier ``W x + b`` on flattened images.

    Exposes the same attack interface as :class:`~sar_atr.model.ATRModel`;
    useful as an analytic reference.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def logits(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        return x.reshape(len(x), -1) @ self.weight.T + self.bias

    def input_gradients(self, images, directions=None):
        x = np.asarray(images, dtype=np.float64)
        n, c = len(x), len(self.bias)
        if directions is None:
            directions = np.broadcast_to(np.eye(c)[:, None, :], (c, n, c))
        grads = np.einsum("dnc,cp->ndp", np.asarray(directions, dtype=np.float64), self.weight)
        return self.logits(x), grads.reshape(n, len(directions), *x.shape[1:])


def _other_classes(k0: np.ndarray, n_classes: int) -> np.ndarray:
    """(N, C-1) array of the classes other than ``k0`` per row."""
    allc = np.broadcast_to(np.arange(n_classes), (len(k0), n_classes))
    return allc[allc != k0[:, None]].reshape(len(k0), n_classes - 1)


def deepfool_batch(images, model, max_iter: int = 50, overshoot: float = 0.02,
                   labels=None) -> list[PerturbationResult]:
    """Multiclass DeepFool on logits for a batch of images.

    Each step linearizes the logit differences at ``x + (1 + overshoot) r``
    and moves to the nearest linearized boundary.  Iteration stops once the
    predicted class changes there, or after ``max_iter`` steps.  The returned
    ``r_hat`` is the accumulated ``r``; success means the class differs at
    ``x + (1 + overshoot) r_hat``.  If ``labels`` is given, images the model
    already misclassifies get ``r_hat = 0`` and zero iterations.
    """
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    n = len(x)
    z0 = np.asarray(model.logits(x), dtype=np.float64)
    n_classes = z0.shape[1]
    pred0 = z0.argmax(axis=1)
    k0 = pred0 if labels is None else np.asarray(labels, dtype=np.int64)
    other = _other_classes(k0, n_classes)
    r_tot = np.zeros_like(x)
    iters = np.zeros(n, dtype=np.int64)
    success = np.zeros(n, dtype=bool)
    adv_class = pred0.copy()
    misclassified = pred0 != k0
    active = ~misclassified
    scale = 1.0 + overshoot

    while np.any(active):
        idx = np.flatnonzero(active)
        dirs = np.zeros((n_classes - 1, len(idx), n_classes))
        rows = np.arange(len(idx))
        for j in range(n_classes - 1):
            dirs[j, rows, other[idx, j]] = 1.0
            dirs[j, rows, k0[idx]] = -1.0
        z, grads = model.input_gradients(x[idx] + scale * r_tot[idx], dirs)
        z = np.asarray(z, dtype=np.float64)
        grads = np.asarray(grads, dtype=np.float64)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(grads))):
            raise FloatingPointError("non-finite logits or gradients in DeepFool")
        pred = z.argmax(axis=1)
        flipped = pred != k0[idx]
        success[idx[flipped]] = True
        adv_class[idx[flipped]] = pred[flipped]
        still = ~flipped & (iters[idx] < max_iter)

        f = np.take_along_axis(z, other[idx], axis=1) - z[rows, k0[idx]][:, None]  # (m, C-1)
        wnorm = np.sqrt((grads.reshape(len(idx), n_classes - 1, -1) ** 2).sum(axis=2))
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.where(wnorm > 0, np.abs(f) / wnorm, np.inf)
        best = dist.argmin(axis=1)
        stuck = ~np.isfinite(dist[rows, best])  # zero gradient: no direction to move
        step_rows = np.flatnonzero(still & ~stuck)
        for r in step_rows:
            l = best[r]
            w = grads[r, l]
            r_tot[idx[r]] += abs(f[r, l]) / wnorm[r, l] ** 2 * w
            iters[idx[r]] += 1
        active[:] = False
        active[idx[step_rows]] = True

    norms_x = np.sqrt((x.reshape(n, -1) ** 2).sum(axis=1))
    norms_r = np.sqrt((r_tot.reshape(n, -1) ** 2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(norms_x > 0, norms_r / norms_x, np.inf)
    return [
        PerturbationResult(
            r_hat=r_tot[i], iterations=int(iters[i]), success=bool(success[i]),
            norm_ratio=float(ratios[i]), orig_class=int(pred0[i]),
            adv_class=int(adv_class[i]) if success[i] else int(pred0[i]),
            already_misclassified=bool(misclassified[i]),
        )
        for i in range(n)
    ]


def deepfool(x, model, max_iter: int = 50, overshoot: float = 0.02,
             label: int | None = None) -> PerturbationResult:
    """DeepFool for a single image."""
    labels = None if label is None else [label]
    return deepfool_batch(np.asarray(x)[None], model, max_iter, overshoot, labels)[0]


def rho_adv(results: list[PerturbationResult]) -> RobustnessSummary:
    """Mean norm ratio over successful attacks; failures are counted, not averaged."""
    ok = [r.norm_ratio for r in results if r.success]
    ratios = np.asarray(ok, dtype=np.float64)
    rho = float(ratios.mean()) if len(ratios) else None
    return RobustnessSummary(rho, len(ok), len(results) - len(ok), ratios)


def attack_dataset(images, model, max_iter: int = 50, overshoot: float = 0.02,
                   batch_size: int = 64) -> list[PerturbationResult]:
    images = np.asarray(images)
    out: list[PerturbationResult] = []
    for start in range(0, len(images), batch_size):
        out.extend(deepfool_batch(images[start:start + batch_size], model, max_iter, overshoot))
    return out


def evaluate_rho(images, model, max_iter: int = 50, overshoot: float = 0.02,
                 batch_size: int = 64) -> tuple[RobustnessSummary, list[PerturbationResult]]:
    if len(images) == 0:
        raise ValueError("empty dataset")
    results = attack_dataset(images, model, max_iter, overshoot, batch_size)
    return rho_adv(results), results


def fgsm_image(x, y, model, epsilon: float) -> np.ndarray:
    """Image-domain FGSM ``x + epsilon * sign(grad_x L_clf)`` for a batch."""
    x = np.asarray(x, dtype=np.float32)
    single = x.ndim == 2
    xb = x[None] if single else x
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    _, grad = model.loss_input_gradient(xb, yb)
    out = (xb + np.float32(epsilon) * np.sign(grad)).astype(np.float32)
    return out[0] if single else out


def order_by_robustness(scores: dict[str, float | None]) -> list[str]:
    """Names sorted from most to least robust (descending score); undefined last."""
    defined = sorted((k for k, v in scores.items() if v is not None),
                     key=lambda k: (-scores[k], k))
    return defined + sorted(k for k, v in scores.items() if v is None)


def write_attack_csv(path: str | Path, sample_ids, true_classes,
                     results: list[PerturbationResult]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ATTACK_FIELDS)
        for sid, y, r in zip(sample_ids, true_classes, results):
            writer.writerow([int(sid), int(y), r.orig_class, r.adv_class if r.success else "",
                             r.iterations, f"{r.norm_ratio:.8f}" if r.success else ""])
