"""Budget-bounded training loop: Nesterov SGD, cosine decay, EMA evaluation."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixmatch, nnet, synthdata
from .checkpoint import OptState, load_checkpoint, save_checkpoint
from .config import RunConfig, dumps
from .errors import ConfigError, DivergenceError
from .metrics import BatchLog, EpochAccumulator, MetricsRow, write_csv
from .sampler import BudgetLedger, budget_check, budget_samples, make_sampler

log = logging.getLogger(__name__)


def cosine_lr(step, total_steps, lr0):
    """Half-cosine decay from ``lr0`` at step 0 to zero at ``total_steps``."""
    if total_steps <= 0:
        raise ConfigError("cosine schedule needs total_steps > 0", key="train.budget_epochs")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def cosine_7_16_lr(step, total_steps, lr0):
    if total_steps <= 0:
        raise ConfigError("cosine schedule needs total_steps > 0", key="train.budget_epochs")
    return lr0 * math.cos(7.0 * math.pi * step / (16.0 * total_steps))


SCHEDULES = {"cosine": cosine_lr, "cosine_7_16": cosine_7_16_lr}


def l2_penalty(params, weight_decay, decay_mask=None):
    """``0.5 * wd * ||theta||^2`` over the decayed entries, and its gradient.

    The optimizer applies exactly this gradient as its weight-decay term.
    """
    theta = params.flat if decay_mask is None else params.flat * decay_mask
    return 0.5 * weight_decay * float(theta @ theta), weight_decay * theta


def sgd_nesterov_step(params, grads, opt: OptState, lr, momentum, weight_decay, decay_mask=None):
    """One in-place Nesterov update; weight decay enters as an L2 gradient term.

    ``decay_mask`` selects the entries that are decayed (weights, not biases);
    ``None`` decays everything.
    """
    g = grads.flat if isinstance(grads, nnet.MlpParams) else np.asarray(grads, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise DivergenceError(f"non-finite gradient at optimizer step {opt.step}")
    if weight_decay:
        # gradient of l2_penalty, without evaluating the penalty itself
        g = g + weight_decay * (params.flat if decay_mask is None else params.flat * decay_mask)
    opt.velocity *= momentum
    opt.velocity -= lr * g
    params.flat += momentum * opt.velocity - lr * g
    opt.step += 1
    return params, opt


@dataclass
class PreparedData:
    dataset: synthdata.Dataset
    split: synthdata.DataSplit
    observed: np.ndarray

    @property
    def features(self):
        return self.dataset.features


def prepare_data(cfg: RunConfig, split_seed=0) -> PreparedData:
    """Generate, hold out, standardise, then pick the labeled subsets."""
    d = cfg.data
    ds = synthdata.generate(d.dataset_spec())
    sp = synthdata.split(ds, d.val_fraction, d.seed, n_test=d.n_test)
    ds, _ = synthdata.standardize(ds, sp)
    sp = synthdata.select_labeled(ds, sp, list(d.n_labeled), split_seed)
    return PreparedData(ds, sp, ds.observed_labels(sp))


def evaluate(params, data: PreparedData, indices, labels_table=None):
    """Mean per-task accuracy of ``params`` on ``indices`` (NaN if empty)."""
    if len(indices) == 0:
        return float("nan")
    labels_table = data.dataset.labels if labels_table is None else labels_table
    X = data.features[indices]
    accs = [nnet.accuracy(params, X, labels_table[indices, t], t) for t in range(params.num_tasks)]
    return float(np.mean(accs))


def labeled_error(params, data: PreparedData):
    correct = total = 0
    for t, idx in enumerate(data.split.labeled_idx):
        if len(idx):
            pred, _ = nnet.predict(params, data.features[idx], t)
            correct += int((pred == data.dataset.labels[idx, t]).sum())
            total += len(idx)
    return 1.0 - correct / total if total else None


@dataclass
class RunResult:
    best_val_accuracy: float | None
    test_accuracy_at_best: float
    best_epoch: float
    final_test_accuracy: float
    steps: int
    samples_seen: int
    budget_samples: int
    metrics_path: str | None = None
    checkpoint_paths: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    collapse: dict | None = None

    def to_json(self):
        return {
            "best_val_accuracy": self.best_val_accuracy,
            "test_accuracy_at_best": self.test_accuracy_at_best,
            "best_epoch": self.best_epoch,
            "final_test_accuracy": self.final_test_accuracy,
            "steps": self.steps,
            "samples_seen": self.samples_seen,
            "budget_samples": self.budget_samples,
            "metrics_path": self.metrics_path,
            "checkpoint_paths": self.checkpoint_paths,
            "collapse": self.collapse,
        }


def detect_collapse(rows, num_classes, margin=0.1):
    """Report a drop of EMA test accuracy to near chance after a higher peak."""
    chance = 1.0 / num_classes
    peak, peak_epoch = -1.0, None
    for r in rows:
        if r.test_err is None:
            continue
        acc = 1.0 - r.test_err
        if acc > peak:
            peak, peak_epoch = acc, r.epoch
        elif peak > chance + 2 * margin and acc <= chance + margin:
            return {"epoch": r.epoch, "test_acc": acc, "peak_test_acc": peak, "peak_epoch": peak_epoch}
    return None


def run_budget(cfg: RunConfig, train_size):
    t = cfg.train
    if t.budget_samples is not None:
        return int(round(t.budget_samples * t.budget_multiplier))
    return budget_samples(train_size, t.budget_epochs, t.budget_multiplier)


def train(cfg: RunConfig, seed=0, split_seed=0, out_dir=None, init_checkpoint=None,
          data: PreparedData | None = None) -> RunResult:
    """Train one replicate; writes the run directory when ``out_dir`` is given."""
    cfg.validate()
    data = data or prepare_data(cfg, split_seed)
    n_total = len(data.dataset)
    N = len(data.split.train_idx)
    B = cfg.sampler.batch_size
    budget = run_budget(cfg, N)
    total_steps = budget // B
    schedule = SCHEDULES[cfg.train.lr_schedule]

    init_ss, sampler_ss, aug_ss = np.random.SeedSequence(seed).spawn(3)
    dims = (data.dataset.dim, *cfg.model.hidden, sum(data.dataset.num_classes))
    init_checkpoint = init_checkpoint or cfg.train.init_checkpoint
    if init_checkpoint:
        ck = load_checkpoint(init_checkpoint)
        if ck.params.layer_dims != dims:
            raise ConfigError(f"checkpoint dims {ck.params.layer_dims} do not match {dims}",
                              key="train.init_checkpoint")
        params, ema = ck.params, ck.ema
        ema.decay = cfg.train.ema_decay
        opt = OptState(ck.opt.velocity, 0)
    else:
        params = nnet.init(dims, init_ss, data.dataset.num_classes)
        ema = nnet.EmaParams.from_params(params, cfg.train.ema_decay)
        opt = OptState.zeros_like(params)
    decay_mask = params.weight_mask()
    ledger = BudgetLedger(N, budget)
    batches = iter(make_sampler(cfg.sampler, data.split, n_total, np.random.default_rng(sampler_ss)))
    aug_rng = np.random.default_rng(aug_ss)
    sup_aug = fixmatch.resolve_supervised_aug(cfg.fixmatch, cfg.sampler.mode)

    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(dumps(cfg))
    batch_log = BatchLog(out / "batch_log.csv") if out and cfg.metrics.raw_batch_log else None

    acc = EpochAccumulator()
    rows = []
    window = cfg.train.eval_every * N
    next_eval = window
    best_val, best_test, best_epoch = None, None, 0.0
    best_snapshot = None
    last_improve = 0.0
    test_idx, val_idx = data.split.test_idx, data.split.val_idx
    lr = schedule(0, total_steps, cfg.train.lr0) if total_steps else 0.0
    step = 0

    def close_window():
        nonlocal best_val, best_test, best_epoch, best_snapshot, last_improve
        summary = acc.summary()
        acc.reset()
        val_acc = evaluate(ema.shadow, data, val_idx)
        test_acc = evaluate(ema.shadow, data, test_idx)
        row = MetricsRow(
            epoch=ledger.epochs_elapsed,
            samples_seen=ledger.samples_seen,
            lr=lr,
            train_err_labeled=labeled_error(ema.shadow, data),
            val_acc=None if math.isnan(val_acc) else val_acc,
            test_err=None if math.isnan(test_acc) else 1.0 - test_acc,
            **summary,
        )
        rows.append(row)
        if not math.isnan(val_acc) and (best_val is None or val_acc > best_val):
            best_val, best_test, best_epoch = val_acc, test_acc, row.epoch
            best_snapshot = (params.copy(), nnet.EmaParams(ema.shadow.copy(), ema.decay),
                             OptState(opt.velocity.copy(), opt.step),
                             BudgetLedger(ledger.train_size, ledger.budget_samples, ledger.samples_seen))
            last_improve = row.epoch

    try:
        while budget_check(ledger, B):
            lr = schedule(step, total_steps, cfg.train.lr0)
            batch = next(batches)
            loss, grad, stats = fixmatch.step_loss(
                batch, params, cfg.fixmatch, aug_rng, data.features, data.observed,
                aug_cfg=cfg.augment, supervised_aug=sup_aug,
                teacher_params=ema.shadow if cfg.fixmatch.teacher == "ema" else None,
                privileged_labels=data.dataset.labels,
            )
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at step {step} (epoch {ledger.epochs_elapsed:.3f})")
            sgd_nesterov_step(params, grad, opt, lr, cfg.train.momentum, cfg.train.weight_decay, decay_mask)
            nnet.ema_update(ema, params)
            ledger.consume(B)
            acc.add(stats)
            if batch_log:
                batch_log.write(step, ledger.samples_seen, stats)
            step += 1
            if ledger.samples_seen >= next_eval:
                while next_eval <= ledger.samples_seen:
                    next_eval += window
                close_window()
                patience = cfg.train.patience
                if patience is not None and best_val is not None and rows[-1].epoch - last_improve >= patience:
                    log.info("early stop at epoch %.2f", rows[-1].epoch)
                    break
        if acc.batches or not rows:
            close_window()
    finally:
        if batch_log:
            batch_log.close()

    final_test = evaluate(ema.shadow, data, test_idx)
    if best_snapshot is None:
        best_snapshot = (params, ema, opt, ledger)
        best_test, best_epoch = final_test, ledger.epochs_elapsed
    result = RunResult(
        best_val_accuracy=best_val,
        test_accuracy_at_best=best_test,
        best_epoch=best_epoch,
        final_test_accuracy=final_test,
        steps=step,
        samples_seen=ledger.samples_seen,
        budget_samples=budget,
        rows=rows,
        collapse=detect_collapse(rows, min(data.dataset.num_classes)),
    )
    if out:
        write_csv(rows, out / "metrics.csv")
        save_checkpoint(out / "ckpt_best", *best_snapshot)
        save_checkpoint(out / "ckpt_final", params, ema, opt, ledger)
        result.metrics_path = str(out / "metrics.csv")
        result.checkpoint_paths = {"best": str(out / "ckpt_best"), "final": str(out / "ckpt_final")}
        (out / "result.json").write_text(json.dumps(result.to_json(), indent=2) + "\n")
    return result
