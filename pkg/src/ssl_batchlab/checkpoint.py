"""Binary checkpoint files.

Layout: a short text preamble (header line, layer dims, head slices, step
counter, budget ledger, EMA decay, a ``data`` marker) followed by raw
little-endian float64 blocks for the parameters, the EMA shadow and the
optimizer velocities, each ``param_count`` long.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nnet import EmaParams, MlpParams, param_count
from .sampler import BudgetLedger

CKPT_HEADER = b"ssl-batchlab-ckpt v1"


@dataclass
class OptState:
    velocity: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params.flat), 0)


@dataclass
class Checkpoint:
    params: MlpParams
    ema: EmaParams
    opt: OptState
    ledger: BudgetLedger


def save_checkpoint(path, params: MlpParams, ema: EmaParams, opt: OptState, ledger: BudgetLedger):
    slices = " ".join(f"{a}:{b}" for a, b in params.head_slices)
    preamble = "\n".join([
        CKPT_HEADER.decode(),
        "layer_dims " + " ".join(str(d) for d in params.layer_dims),
        "head_slices " + slices,
        f"step {opt.step}",
        f"ledger {ledger.samples_seen} {ledger.train_size} {ledger.budget_samples}",
        f"ema_decay {ema.decay!r}",
        "data",
    ]) + "\n"
    body = b"".join(a.astype("<f8").tobytes() for a in (params.flat, ema.shadow.flat, opt.velocity))
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(preamble.encode() + body)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    lines = []
    pos = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise CheckpointError(f"{path}: truncated preamble")
        line = raw[pos:end]
        pos = end + 1
        if not lines and line != CKPT_HEADER:
            raise CheckpointError(f"{path}: expected header {CKPT_HEADER.decode()!r}, found {line[:40]!r}")
        lines.append(line.decode())
        if line == b"data":
            break
        if len(lines) > 16:
            raise CheckpointError(f"{path}: malformed preamble")
    meta = {ln.split(" ", 1)[0]: ln.split(" ", 1)[1] if " " in ln else "" for ln in lines[1:-1]}
    try:
        dims = tuple(int(v) for v in meta["layer_dims"].split())
        slices = tuple(tuple(int(x) for x in s.split(":")) for s in meta["head_slices"].split())
        step = int(meta["step"])
        seen, train_size, budget = (int(v) for v in meta["ledger"].split())
        decay = float(meta["ema_decay"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad preamble field ({exc})") from exc
    P = param_count(dims)
    body = raw[pos:]
    if len(body) != 3 * P * 8:
        raise CheckpointError(f"{path}: truncated data, expected {3 * P * 8} bytes, found {len(body)}")
    blocks = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(3, P)
    params = MlpParams(blocks[0].copy(), dims, slices)
    ema = EmaParams(MlpParams(blocks[1].copy(), dims, slices), decay)
    return Checkpoint(params, ema, OptState(blocks[2].copy(), step), BudgetLedger(train_size, budget, seen))
