"""``ssl-batchlab`` command line: run, sweep, audit-sampler, export-plots, resume."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import plots, sampler, trainer
from .errors import BatchLabError, ConfigError, DivergenceError
from .metrics import read_csv

log = logging.getLogger("ssl_batchlab")


def output_root():
    return Path(os.environ.get("SSL_BATCHLAB_DIR", "runs"))


def _load_with_overrides(source, overrides):
    cfg = config_mod.load(source)
    if overrides:
        cfg = config_mod.apply_overrides(cfg, [config_mod.parse_override(o) for o in overrides])
    return cfg


# ---------------------------------------------------------------- run

def _run_one(args):
    cfg_dict, seed, split_seed, out_dir = args
    cfg = config_mod.from_dict(cfg_dict)
    try:
        res = trainer.train(cfg, seed=seed, split_seed=split_seed, out_dir=out_dir)
    except DivergenceError as exc:
        raise DivergenceError(f"run {Path(out_dir).name}: {exc}") from exc
    return res.to_json()


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_metrics(run_dir):
    """Best-validation test accuracy and final test accuracy, from metrics.csv alone."""
    rows = read_csv(Path(run_dir) / "metrics.csv")
    with_val = [r for r in rows if r.val_acc is not None]
    best = max(with_val, key=lambda r: r.val_acc) if with_val else rows[-1]
    return {
        "best_val_accuracy": best.val_acc,
        "test_accuracy_at_best": None if best.test_err is None else 1.0 - best.test_err,
        "final_test_accuracy": None if rows[-1].test_err is None else 1.0 - rows[-1].test_err,
        "best_epoch": best.epoch,
    }


def mean_std(values):
    """Mean and sample standard deviation; a single value has std 0."""
    a = np.asarray([v for v in values if v is not None], dtype=float)
    if a.size == 0:
        return None, None
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def summarize(run_dirs):
    per_run = {Path(d).name: run_metrics(d) for d in run_dirs}
    summary = {"runs": len(per_run), "per_run": per_run}
    for key in ("test_accuracy_at_best", "final_test_accuracy", "best_val_accuracy"):
        m, s = mean_std(r[key] for r in per_run.values())
        summary[key] = {"mean": m, "std": s,
                        "median": float(np.median([r[key] for r in per_run.values() if r[key] is not None]))
                        if m is not None else None}
    return summary


def cmd_run(ns):
    cfg = _load_with_overrides(ns.config, ns.override)
    root = Path(ns.out) if ns.out else output_root() / cfg.name
    seeds = [int(s) for s in ns.seeds.split(",")] if ns.seeds else list(cfg.replicates.seeds)
    splits = [int(s) for s in ns.split_seeds.split(",")] if ns.split_seeds else list(cfg.replicates.split_seeds)
    cfg_dict = config_mod.to_dict(cfg)
    jobs_list = [(cfg_dict, s, k, str(root / f"seed{s}_split{k}")) for s in seeds for k in splits]
    _map(_run_one, jobs_list, ns.jobs)
    summary = summarize([j[3] for j in jobs_list])
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    t = summary["test_accuracy_at_best"]
    print(f"{cfg.name}: {summary['runs']} runs, test accuracy at best val "
          f"{100 * t['mean']:.2f} +- {100 * t['std']:.2f} (median {100 * t['median']:.2f})")
    print(f"results in {root}")
    return 0


# ---------------------------------------------------------------- sweep

@dataclass
class SweepSpec:
    base: object
    params: dict
    trial_budget: int = 100
    seed: int = 0
    run_seed: int = 0
    split_seed: int = 0
    name: str = "sweep"
    overrides: dict = field(default_factory=dict)

    def validate(self):
        if not isinstance(self.trial_budget, int) or self.trial_budget < 1:
            raise ConfigError("trial_budget must be an integer >= 1", key="trial_budget")
        if not self.params:
            raise ConfigError("no searched parameters", key="params")
        for key, p in self.params.items():
            if not isinstance(p, dict):
                raise ConfigError("expected an object", key=f"params.{key}")
            if "choices" in p:
                if not p["choices"]:
                    raise ConfigError("empty choices", key=f"params.{key}")
                continue
            scale = p.get("scale", "linear")
            if scale not in ("linear", "log"):
                raise ConfigError(f"unknown scale {scale!r}", key=f"params.{key}.scale")
            lo, hi = p.get("low"), p.get("high")
            if not isinstance(lo, (int, float)) or not isinstance(hi, (int, float)) or not lo < hi:
                raise ConfigError("need numeric low < high", key=f"params.{key}")
            if scale == "log" and lo <= 0:
                raise ConfigError("log scale needs low > 0", key=f"params.{key}.low")
        return self


def load_sweep(path):
    raw = json.loads(Path(path).read_text())
    known = set(SweepSpec.__dataclass_fields__)
    for k in raw:
        if k not in known:
            raise ConfigError("unknown key", key=k)
    if "base" not in raw or "params" not in raw:
        raise ConfigError("sweep spec needs 'base' and 'params'")
    spec = SweepSpec(**raw).validate()
    base = spec.base
    if isinstance(base, str):
        p = Path(base)
        if not p.is_absolute() and (Path(path).parent / p).exists():
            base = str(Path(path).parent / p)
        cfg = config_mod.load(base)
    else:
        cfg = config_mod.from_dict(base)
    if spec.overrides:
        cfg = config_mod.apply_overrides(cfg, list(spec.overrides.items()))
    for key in spec.params:
        config_mod.apply_overrides(cfg, [(key, _draw(spec.params[key], np.random.default_rng(0)))])
    return spec, cfg


def _draw(p, rng):
    if "choices" in p:
        return p["choices"][int(rng.integers(len(p["choices"])))]
    lo, hi = float(p["low"]), float(p["high"])
    v = math.exp(rng.uniform(math.log(lo), math.log(hi))) if p.get("scale") == "log" else rng.uniform(lo, hi)
    return int(round(v)) if p.get("integer") else float(v)


def sample_trials(spec: SweepSpec):
    """One independent parameter draw per trial, from a spawned child seed."""
    out = []
    for child in np.random.SeedSequence(spec.seed).spawn(spec.trial_budget):
        rng = np.random.default_rng(child)
        out.append({k: _draw(p, rng) for k, p in spec.params.items()})
    return out


def _sweep_trial(args):
    cfg_dict, values, seed, split_seed, out_dir = args
    try:
        cfg = config_mod.apply_overrides(config_mod.from_dict(cfg_dict), list(values.items()))
        res = trainer.train(cfg, seed=seed, split_seed=split_seed, out_dir=out_dir)
        return {"status": "ok", "val_acc": res.best_val_accuracy, "test_acc": res.test_accuracy_at_best}
    except (BatchLabError, FloatingPointError) as exc:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "val_acc": None, "test_acc": None}


def cmd_sweep(ns):
    spec, base = load_sweep(ns.spec)
    if ns.trial_budget:
        spec.trial_budget = ns.trial_budget
        spec.validate()
    root = Path(ns.out) if ns.out else output_root() / spec.name
    root.mkdir(parents=True, exist_ok=True)
    draws = sample_trials(spec)
    base_dict = config_mod.to_dict(base)
    jobs = [(base_dict, v, spec.run_seed, spec.split_seed, str(root / f"trial_{i:04d}")) for i, v in enumerate(draws)]
    outcomes = _map(_sweep_trial, jobs, ns.jobs)
    board = []
    for i, (values, res) in enumerate(zip(draws, outcomes)):
        board.append({"trial": i, **res, **values})
    ok = sorted((b for b in board if b["status"] == "ok"), key=lambda b: (-(b["val_acc"] or 0.0), b["trial"]))
    failed = [b for b in board if b["status"] != "ok"]
    cols = ["rank", "trial", "status", "val_acc", "test_acc", *spec.params, "error"]
    with (root / "leaderboard.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for rank, b in enumerate(ok + failed, 1):
            w.writerow({"rank": rank if b["status"] == "ok" else "", **{k: _csv_value(v) for k, v in b.items()}})
    if ok:
        best = config_mod.apply_overrides(base, [(k, ok[0][k]) for k in spec.params])
        (root / "best_config.json").write_text(config_mod.dumps(best))
        print(f"best trial {ok[0]['trial']}: val acc {ok[0]['val_acc']:.4f}")
    print(f"{len(ok)} ok, {len(failed)} failed; leaderboard in {root / 'leaderboard.csv'}")
    return 0 if ok else 3


def _csv_value(v):
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return v


# ---------------------------------------------------------------- audit-sampler

def cmd_audit(ns):
    cfg = _load_with_overrides(ns.config, ns.override)
    data = trainer.prepare_data(cfg, ns.split_seed)
    n_total = len(data.dataset)
    T = data.dataset.num_tasks
    s = sampler.make_sampler(cfg.sampler, data.split, n_total, np.random.default_rng(ns.seed))
    it = iter(s)
    batches = [next(it) for _ in range(ns.steps)]
    counts = sampler.exposure_counts(batches, n_total)
    expected, conf = sampler.expected_exposure(cfg.sampler, data.split, n_total, ns.steps)
    train = np.sort(np.asarray(data.split.train_idx))
    fh = open(ns.out, "w", newline="") if ns.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["sample_id", "configuration", "exposure_count", "expected_exposure"])
        for i in train:
            w.writerow([int(i), sampler.configuration_name(int(conf[i]), T), int(counts[i]), format(expected[i], ".17g")])
    finally:
        if ns.out:
            fh.close()
    labeled = conf[train] != 0
    lab_mean = counts[train][labeled].mean() if labeled.any() else float("nan")
    unl_mean = counts[train][~labeled].mean() if (~labeled).any() else float("nan")
    ratio = lab_mean / unl_mean if unl_mean else float("inf")
    print(f"steps={ns.steps} mode={cfg.sampler.mode} mean exposure labeled={lab_mean:g} "
          f"unlabeled={unl_mean:g} ratio={ratio:g}", file=sys.stderr)
    if T > 1 or cfg.sampler.mode == "explicit_multitask":
        for c in sorted(set(conf[train].tolist()), reverse=True):
            print(f"  configuration {sampler.configuration_name(c, T)}: {int((conf[train] == c).sum())} samples",
                  file=sys.stderr)
    return 0


# ---------------------------------------------------------------- export-plots

def cmd_plots(ns):
    paths = plots.export_plots(ns.dir, compare=ns.compare, out_dir=ns.out, log_losses=not ns.linear)
    for p in paths:
        print(p)
    return 0


# ---------------------------------------------------------------- resume

def cmd_resume(ns):
    ckpt = Path(ns.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint {ckpt} not found")
    source = ns.config or ckpt.parent / "config.json"
    if not Path(source).exists() and not ns.config:
        raise ConfigError(f"no config.json next to {ckpt}; pass --config")
    cfg = _load_with_overrides(source, ns.override)
    cfg = config_mod.apply_overrides(cfg, [("train.init_checkpoint", str(ckpt.resolve()))])
    out = Path(ns.out) if ns.out else output_root() / f"{cfg.name}_resume" / f"seed{ns.seed}_split{ns.split_seed}"
    res = trainer.train(cfg, seed=ns.seed, split_seed=ns.split_seed, out_dir=out)
    print(f"resumed from {ckpt}: {len(res.rows)} epochs logged to {res.metrics_path}")
    print(f"final test accuracy {res.final_test_accuracy:.4f}")
    if res.collapse:
        c = res.collapse
        print(f"collapse: test accuracy fell to {c['test_acc']:.4f} at epoch {c['epoch']:.2f} "
              f"(peak {c['peak_test_acc']:.4f} at epoch {c['peak_epoch']:.2f})")
    else:
        print("collapse: none detected")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ssl-batchlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every replicate of a config or preset")
    r.add_argument("config", help="config file or preset name")
    r.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--seeds", help="comma-separated seeds (default: replicates.seeds)")
    r.add_argument("--split-seeds", help="comma-separated split seeds (default: replicates.split_seeds)")
    r.add_argument("--out", help="output directory (default: $SSL_BATCHLAB_DIR/<name>)")
    r.add_argument("--jobs", "-j", type=int, default=1)
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="random hyperparameter search")
    s.add_argument("spec")
    s.add_argument("--trial-budget", type=int)
    s.add_argument("--out")
    s.add_argument("--jobs", "-j", type=int, default=1)
    s.set_defaults(fn=cmd_sweep)

    a = sub.add_parser("audit-sampler", help="per-sample exposure counts")
    a.add_argument("config")
    a.add_argument("--steps", type=int, required=True)
    a.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--split-seed", type=int, default=0)
    a.add_argument("--out", help="CSV path (default: stdout)")
    a.set_defaults(fn=cmd_audit)

    e = sub.add_parser("export-plots", help="write SVG training-dynamics charts")
    e.add_argument("dir")
    e.add_argument("--compare", help="JSON manifest of run directories to overlay")
    e.add_argument("--out", help="directory for the SVGs (default: dir)")
    e.add_argument("--linear", action="store_true", help="linear y axis for the loss figure")
    e.set_defaults(fn=cmd_plots)

    c = sub.add_parser("resume", help="continue training from a checkpoint")
    c.add_argument("checkpoint")
    c.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE")
    c.add_argument("--config", help="config to use instead of the checkpoint's run config")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--split-seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_resume)
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(ns, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return ns.fn(ns)
    except (BatchLabError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 3)
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
