"""Training objectives: task regression, domain classification, domain
confusion, pairwise feature alignment, and their weighted combination.

Conventions:
  * every per-example term is averaged over its batch (or pair count), so
    the loss weights mean the same thing at any batch size;
  * softmax log arguments are clamped at 1e-12 to survive float32
    underflow;
  * the confusion loss trains only the representation (the domain head is
    held constant inside it); the domain head is updated exclusively by
    the classifier loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from simreal import net
from simreal.errors import (
    ConfigError,
    DimensionError,
    EmptyBatchError,
    LabelError,
    TagError,
)

LOG_CLAMP = 1e-12

SOURCE, TARGET = 0, 1


@dataclass(frozen=True)
class LossWeights:
    """Adaptation-loss weights; both are halved when both terms are active."""

    confusion_weight: float = 0.1
    pairwise_weight: float = 0.01
    halve_when_combined: bool = True

    def effective(self) -> Tuple[float, float]:
        if self.halve_when_combined and self.confusion_weight > 0 and self.pairwise_weight > 0:
            return self.confusion_weight / 2.0, self.pairwise_weight / 2.0
        return self.confusion_weight, self.pairwise_weight


@dataclass
class Batch:
    """One optimization step's worth of images plus loss wiring.

    Rows are positions in `images`; the same underlying example may occupy
    several rows when sampled with replacement. `pairs` holds (source_row,
    target_row) index pairs for the alignment term.
    """

    images: np.ndarray  # [N,C,H,W]
    domain_tags: np.ndarray  # [N] ints, 0=source 1=target
    labels: Optional[np.ndarray] = None  # [N,n_out]; rows referenced by task_rows_*
    task_rows_source: Optional[np.ndarray] = None
    task_rows_target: Optional[np.ndarray] = None
    confusion_rows: Optional[np.ndarray] = None
    pairs: Optional[np.ndarray] = None  # [P,2]

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.images):
            raise DimensionError(
                f"labels ({len(self.labels)}) must align 1:1 with images "
                f"({len(self.images)})"
            )


# --------------------------------------------------------------------------
# individual terms


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def task_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean half squared error: (1/2K) sum_i ||pred_i - label_i||^2."""
    value, _ = task_loss_with_grad(predictions, labels)
    return value


def task_loss_with_grad(predictions: np.ndarray, labels: np.ndarray):
    predictions = np.atleast_2d(predictions)
    labels = np.atleast_2d(labels)
    if predictions.shape[0] == 0:
        raise EmptyBatchError("task loss needs at least one example")
    if predictions.shape != labels.shape:
        raise DimensionError(
            f"predictions {predictions.shape} and labels {labels.shape} differ"
        )
    k = predictions.shape[0]
    resid = predictions - labels
    value = float(np.sum(resid.astype(np.float64) ** 2) / (2.0 * k))
    return value, resid / k


def classifier_loss(logits: np.ndarray, domain_tags: np.ndarray) -> float:
    value, _ = classifier_loss_with_grad(logits, domain_tags)
    return value


def classifier_loss_with_grad(logits: np.ndarray, domain_tags: np.ndarray):
    """Softmax cross-entropy of the domain head against the true tags."""
    logits = np.atleast_2d(logits)
    n, d = logits.shape
    if n == 0:
        raise EmptyBatchError("classifier loss needs at least one example")
    tags = np.asarray(domain_tags)
    if tags.shape != (n,):
        raise DimensionError(f"need one tag per row, got {tags.shape} for {n} rows")
    if tags.min() < 0 or tags.max() >= d:
        raise TagError(f"domain tags must lie in [0,{d}), got {np.unique(tags)}")
    q = _softmax(logits)
    picked = q[np.arange(n), tags]
    value = float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))
    dlogits = q.copy()
    dlogits[np.arange(n), tags] -= 1.0
    return value, dlogits / n


def confusion_loss(logits: np.ndarray) -> float:
    value, _ = confusion_loss_with_grad(logits)
    return value


def confusion_loss_with_grad(logits: np.ndarray):
    """Cross-entropy between the domain prediction and the uniform
    distribution, averaged over the batch; minimized (at ln D) when the
    classifier is maximally confused. Gradient is w.r.t. the logits, i.e.
    it flows into the representation, never into the domain head."""
    logits = np.atleast_2d(logits)
    n, d = logits.shape
    if n == 0:
        raise EmptyBatchError("confusion loss needs at least one example")
    q = _softmax(logits)
    value = float(-np.mean(np.sum(np.log(np.maximum(q, LOG_CLAMP)), axis=1)) / d)
    return value, (q - 1.0 / d) / n


def feature_distance(fa: np.ndarray, fb: np.ndarray) -> float:
    """Euclidean distance between two feature vectors."""
    fa = np.asarray(fa)
    fb = np.asarray(fb)
    if fa.shape != fb.shape:
        raise DimensionError(f"feature shapes differ: {fa.shape} vs {fb.shape}")
    return float(np.linalg.norm((fa - fb).astype(np.float64)))


def pairwise_loss(pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean over pairs of half squared feature distance. No push-apart term."""
    if len(pairs) == 0:
        raise EmptyBatchError("pairwise loss needs at least one pair")
    fs = np.stack([p[0] for p in pairs])
    ft = np.stack([p[1] for p in pairs])
    value, _, _ = pairwise_loss_with_grad(fs, ft)
    return value


def pairwise_loss_with_grad(fs: np.ndarray, ft: np.ndarray):
    if fs.shape != ft.shape:
        raise DimensionError(f"pair feature shapes differ: {fs.shape} vs {ft.shape}")
    if fs.shape[0] == 0:
        raise EmptyBatchError("pairwise loss needs at least one pair")
    p = fs.shape[0]
    diff = fs - ft
    value = float(np.sum(diff.astype(np.float64) ** 2) / (2.0 * p))
    return value, diff / p, -diff / p


# --------------------------------------------------------------------------
# combined objective


def total_loss(params: net.NetworkParams, batch: Batch, weights: LossWeights):
    """Evaluate the joint objective on a batch and backpropagate it.

    Returns (total, parts, grads) where parts maps term names to their
    unweighted values and grads covers the representation and regressor
    parameters only; the domain head is updated via domain_head_step.
    """
    lam_eff, nu_eff = weights.effective()
    n = len(batch.images)
    tags = np.asarray(batch.domain_tags)
    if tags.shape != (n,):
        raise DimensionError("need one domain tag per image")

    if lam_eff > 0:
        rows = batch.confusion_rows
        if rows is None or len(rows) == 0:
            raise ConfigError("confusion weight > 0 but no confusion rows given")
        if len(np.unique(tags[rows])) < 2:
            raise ConfigError("confusion weight > 0 needs a two-domain batch")
    if nu_eff > 0 and (batch.pairs is None or len(batch.pairs) == 0):
        raise ConfigError("pairwise weight > 0 but no pairs given")

    trace = net.forward_batch(params, batch.images)
    adapt = trace.adaptation_features

    dpred = np.zeros_like(trace.predictions)
    dadapt = None
    parts = {"task_src": 0.0, "task_tgt": 0.0, "confusion": 0.0, "pairwise": 0.0}

    for key, rows in (("task_src", batch.task_rows_source),
                      ("task_tgt", batch.task_rows_target)):
        if rows is None or len(rows) == 0:
            continue
        if batch.labels is None:
            raise LabelError(f"{key} rows given but batch has no labels")
        value, g = task_loss_with_grad(trace.predictions[rows], batch.labels[rows])
        parts[key] = value
        np.add.at(dpred, rows, g)

    if lam_eff > 0:
        rows = batch.confusion_rows
        logits = net.domain_logits_batch(params, adapt[rows])
        value, dlogits = confusion_loss_with_grad(logits)
        parts["confusion"] = value
        dadapt = np.zeros_like(adapt)
        np.add.at(dadapt, rows, (lam_eff * dlogits) @ params.dom_w)

    if nu_eff > 0:
        pr = np.asarray(batch.pairs)
        value, dfs, dft = pairwise_loss_with_grad(adapt[pr[:, 0]], adapt[pr[:, 1]])
        parts["pairwise"] = value
        if dadapt is None:
            dadapt = np.zeros_like(adapt)
        np.add.at(dadapt, pr[:, 0], nu_eff * dfs)
        np.add.at(dadapt, pr[:, 1], nu_eff * dft)

    total = (
        parts["task_src"]
        + parts["task_tgt"]
        + lam_eff * parts["confusion"]
        + nu_eff * parts["pairwise"]
    )
    grads = net.backward_batch(params, batch.images, trace, dpred, dadapt)
    return total, parts, grads


def domain_head_grads(params: net.NetworkParams, adaptation_features: np.ndarray,
                      domain_tags: np.ndarray):
    """Classifier loss and its gradients for the domain head alone; the
    features are treated as constants."""
    logits = net.domain_logits_batch(params, adaptation_features)
    value, dlogits = classifier_loss_with_grad(logits, domain_tags)
    grads = {
        "dom_w": dlogits.T @ adaptation_features,
        "dom_b": dlogits.sum(axis=0),
    }
    return value, grads
