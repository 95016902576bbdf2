"""Confidence-thresholded pseudo-labels and the combined FixMatch objective.

The teacher pass sees weakly perturbed inputs and only produces targets
(no gradient flows through it).  The student pass sees strongly perturbed
copies of the same rows and is trained against true labels where present
and against kept pseudo-labels elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, augment, nnet
from .errors import ConfigError

SUPERVISED_AUG = ("auto", "weak", "strong")
TEACHERS = ("live", "ema")


@dataclass
class FixmatchConfig:
    tau: float = 0.95
    lambda_u: float = 1.0
    lambda_s: float = 1.0
    supervised_aug: str = "auto"
    teacher: str = "live"

    def validate(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]", key="fixmatch.tau")
        if self.lambda_u < 0:
            raise ConfigError("lambda_u must be >= 0", key="fixmatch.lambda_u")
        if self.lambda_s < 0:
            raise ConfigError("lambda_s must be >= 0", key="fixmatch.lambda_s")
        if self.supervised_aug not in SUPERVISED_AUG:
            raise ConfigError(f"unknown value {self.supervised_aug!r}", key="fixmatch.supervised_aug")
        if self.teacher not in TEACHERS:
            raise ConfigError(f"unknown teacher {self.teacher!r}", key="fixmatch.teacher")


@dataclass
class PseudoLabelBatch:
    pseudo_labels: np.ndarray
    keep_mask: np.ndarray
    confidences: np.ndarray


def make_pseudo_labels(teacher_logits, tau) -> PseudoLabelBatch:
    teacher_logits = np.ascontiguousarray(teacher_logits, dtype=np.float64)
    if len(teacher_logits) == 0:
        return PseudoLabelBatch(np.zeros(0, np.int64), np.zeros(0, bool), np.zeros(0))
    labels, conf = _kernels.softmax_confidence(teacher_logits)
    return PseudoLabelBatch(labels, conf >= tau, conf)


def supervised_loss(logits, true_labels):
    """Mean cross-entropy over the labeled rows; 0 with zero gradient if there are none."""
    n = len(true_labels)
    if n == 0:
        return 0.0, np.zeros_like(np.asarray(logits, dtype=np.float64))
    loss, grad, _ = nnet.softmax_xent(logits, true_labels, np.full(n, 1.0 / n))
    return loss, grad


def unsupervised_loss(student_logits, plb: PseudoLabelBatch, u_count):
    """Cross-entropy summed over kept pseudo-labels, divided by ``u_count``."""
    student_logits = np.asarray(student_logits, dtype=np.float64)
    if u_count == 0 or not plb.keep_mask.any():
        return 0.0, np.zeros_like(student_logits)
    weights = plb.keep_mask / float(u_count)
    loss, grad, _ = nnet.softmax_xent(student_logits, plb.pseudo_labels, weights)
    return loss, grad


@dataclass
class TaskStats:
    n_labeled: int
    sup_loss: float
    u_count: int
    unsup_loss: float
    # per unlabeled row, in batch order
    sample_ids: np.ndarray
    pseudo_labels: np.ndarray
    confidences: np.ndarray
    keep_mask: np.ndarray
    hidden_labels: np.ndarray | None

    @property
    def kept(self):
        return int(self.keep_mask.sum())


@dataclass
class BatchStats:
    tasks: list = field(default_factory=list)
    total_loss: float = 0.0

    @property
    def sup_loss(self):
        return sum(t.sup_loss for t in self.tasks)

    @property
    def unsup_loss(self):
        return sum(t.unsup_loss for t in self.tasks)


def resolve_supervised_aug(cfg: FixmatchConfig, sampler_mode):
    if cfg.supervised_aug != "auto":
        return cfg.supervised_aug
    return "strong" if sampler_mode == "implicit" else "weak"


def step_loss(batch, params, cfg: FixmatchConfig, rng, features, observed_labels,
              aug_cfg=None, feature_std=1.0, supervised_aug="strong",
              teacher_params=None, privileged_labels=None):
    """Total loss, its gradient and per-batch statistics for one mini-batch.

    ``observed_labels`` is the masked (n, T) label table (-1 = unlabeled);
    ``privileged_labels`` the full ground truth, used only for statistics.
    Weak perturbation is drawn from ``rng`` before the strong one.
    """
    aug_cfg = aug_cfg or augment.AugmentConfig()
    idx = batch.indices
    X = features[idx]
    Xw = augment.weak(X, aug_cfg, rng, feature_std)
    Xs = augment.strong(X, aug_cfg, rng, feature_std)
    logits_w, cache_w = nnet.forward(params, Xw)
    logits_s, cache_s = nnet.forward(params, Xs)
    if teacher_params is None:
        teacher = logits_w
    else:
        teacher, _ = nnet.forward(teacher_params, Xw)
    dw = np.zeros_like(logits_w)
    ds = np.zeros_like(logits_s)
    sup_grad, sup_logits = (dw, logits_w) if supervised_aug == "weak" else (ds, logits_s)

    stats = BatchStats()
    total = 0.0
    for t, (a, b) in enumerate(params.head_slices):
        lab = batch.labeled_mask[:, t]
        unl = ~lab
        y = observed_labels[idx[lab], t]
        if (y < 0).any():
            raise ValueError("batch marks a row as labeled but its label is masked")
        l_s, g_s = supervised_loss(np.ascontiguousarray(sup_logits[lab, a:b]), y)
        sup_grad[lab, a:b] += cfg.lambda_s * g_s

        plb = make_pseudo_labels(teacher[unl, a:b], cfg.tau)
        u_count = int(unl.sum())
        l_u, g_u = unsupervised_loss(np.ascontiguousarray(logits_s[unl, a:b]), plb, u_count)
        ds[unl, a:b] += cfg.lambda_u * g_u

        total += cfg.lambda_s * l_s + cfg.lambda_u * l_u
        hidden = None if privileged_labels is None else privileged_labels[idx[unl], t]
        stats.tasks.append(TaskStats(int(lab.sum()), l_s, u_count, l_u, idx[unl],
                                     plb.pseudo_labels, plb.confidences, plb.keep_mask, hidden))
    stats.total_loss = total

    grad = nnet.backward(params, cache_s, ds)
    if dw.any():
        nnet.backward(params, cache_w, dw, grad)
    return total, grad, stats
