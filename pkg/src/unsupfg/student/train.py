from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import read_manifest, resolve
from ..imagery import read_mask, read_netpbm, to_student_channels
from .adam import AdamState, adam_step
from .checkpoint import save_checkpoint
from .net import PRESETS, ConfigurationError, Student, loss, loss_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    preset: str = "desk"
    batch_size: int = 16
    steps: int = 600
    seed: int = 0
    lr: float = 0.001
    checkpoint_every: int = 0  # 0 disables intermediate checkpoints
    out_dir: str | None = None
    loss_log: str | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}")
        if self.batch_size < 1 or self.steps < 1:
            raise ConfigurationError("batch_size and steps must be >= 1")


@dataclass
class TrainResult:
    student: Student
    state: AdamState
    losses: list[tuple[int, float]]


def load_examples(manifest_path, input_size: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Inputs (N, 7, S, S) float32 and targets (N, out*out) float32 in [0, 1]."""
    entries = read_manifest(manifest_path)
    if not entries:
        raise ConfigurationError(f"{manifest_path}: empty training manifest")
    xs, ys = [], []
    for e in entries:
        if e.mask_path is None:
            raise ConfigurationError(f"{e.key}: training entry has no mask_path")
        xs.append(to_student_channels(read_netpbm(resolve(manifest_path, e.image_path)), input_size).planes)
        ys.append(read_mask(resolve(manifest_path, e.mask_path)).values.reshape(-1))
    return np.stack(xs), np.stack(ys).astype(np.float32) / 255.0


def _index_stream(n: int, rng: np.random.Generator):
    while True:
        yield from rng.permutation(n)


def train(inputs: np.ndarray, targets: np.ndarray, config: TrainConfig, student: Student | None = None,
          state: AdamState | None = None) -> TrainResult:
    """Adam on the batch-mean summed squared error; one loss record per step."""
    if len(inputs) == 0:
        raise ConfigurationError("no training examples")
    seq = np.random.SeedSequence(config.seed)
    init_seed, shuffle_seed = seq.spawn(2)
    if student is None:
        student = Student.create(config.preset, seed=int(init_seed.generate_state(1)[0]))
    if targets.shape[1] != student.arch.fc_out:
        raise ConfigurationError(f"targets have {targets.shape[1]} values, network emits {student.arch.fc_out}")
    if state is None:
        state = AdamState.for_params(student.params, lr=config.lr)
    stream = _index_stream(len(inputs), np.random.default_rng(shuffle_seed))
    out_dir = Path(config.out_dir) if config.out_dir else None
    log_fh = open(config.loss_log, "w") if config.loss_log else None
    losses = []
    try:
        if log_fh:
            log_fh.write("step,loss\n")
        for step in range(1, config.steps + 1):
            idx = np.sort([next(stream) for _ in range(config.batch_size)])
            x, y = inputs[idx], targets[idx]
            pred, cache = student.forward(x, keep_cache=True)
            value = loss(pred, y)
            grads = student.backward(cache, loss_grad(pred, y))
            del cache
            adam_step(student.params, grads, state)
            losses.append((step, value))
            if log_fh:
                log_fh.write(f"{step},{value!r}\n")
            if step % 100 == 0:
                log.info("step %d loss %.5f", step, value)
            if out_dir and config.checkpoint_every and step % config.checkpoint_every == 0:
                save_checkpoint(out_dir / f"step_{step:06d}.usfg", student.params, state, student.arch)
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(student, state, losses)
