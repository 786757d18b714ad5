"""MSE training with momentum SGD and the staged (easy-to-hard) driver."""
import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .metrics import bicubic_baseline, psnr
from .network import gun_backward, gun_forward
from .tensor import ShapeError

log = logging.getLogger(__name__)

LOG_HEADER = ["stage", "lambda", "epoch", "mean_loss", "val_psnr"]


class NumericError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


def mse_loss(pred, target):
    """Per-sample squared L2 error averaged over the batch; returns ``(loss, grad)``."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    n = pred.shape[0]
    diff = pred - target.astype(pred.dtype, copy=False)
    loss = float(np.sum(diff.astype(np.float64) ** 2) / n)
    return loss, (2.0 / n) * diff


def decays(name):
    """Weight decay applies to convolution weights only."""
    return name.endswith(".weight")


@dataclass
class OptimState:
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_model(cls, model, **kw):
        st = cls(**kw)
        st.velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
        return st


def sgd_momentum_step(params, grads, optim):
    """``v <- m v - lr (g + wd p)``, ``p <- p + v``, in place."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if decays(name) and optim.weight_decay:
            g = g + optim.weight_decay * p
        v = optim.velocity.get(name)
        if v is None:
            v = optim.velocity[name] = np.zeros_like(p)
        v *= optim.momentum
        v -= (optim.lr * g).astype(p.dtype, copy=False)
        p += v
    optim.step += 1


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay: float = 10.0
    # 0-based stage indices at whose start the learning rate is divided by lr_decay
    decay_at: tuple = (2, 4)
    seed: int = 0
    max_iterations: int | None = None
    log_path: str | None = None
    shave: int | None = None  # validation border; defaults to the scale

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch statistics")


@dataclass
class StageReport:
    stage: int
    lam: float
    n_samples: int
    lr: float
    epoch_losses: list = field(default_factory=list)
    iterations: int = 0
    val_psnr: float | None = None


@dataclass
class TrainReport:
    stages: list = field(default_factory=list)
    bicubic_psnr: float | None = None

    @property
    def iterations(self):
        return sum(s.iterations for s in self.stages)

    def table(self):
        """Validation PSNR per stage, bicubic first."""
        fmt = lambda v: "-" if v is None else f"{v:.2f}"
        lines = [f"{'lambda':>8} {'samples':>8} {'val_psnr':>9}",
                 f"{'bicubic':>8} {'':>8} {fmt(self.bicubic_psnr):>9}"]
        for s in self.stages:
            lines.append(f"{s.lam:>8.3g} {s.n_samples:>8d} {fmt(s.val_psnr):>9}")
        return "\n".join(lines)


class _LossLog:
    def __init__(self, path):
        self.path = path
        if path and (not os.path.exists(path) or os.path.getsize(path) == 0):
            with open(path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(LOG_HEADER)

    def write(self, *row):
        if not self.path:
            return
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                ["" if v is None else (f"{v:.8g}" if isinstance(v, float) else v) for v in row])


def stack_pairs(pairs, dtype=np.float32):
    """LR and HR patch banks as ``[N, 1, h, w]`` arrays."""
    lr = np.stack([p.lr for p in pairs])[:, None].astype(dtype)
    hr = np.stack([p.hr for p in pairs])[:, None].astype(dtype)
    return lr, hr


def validation_psnr(model, validation, shave):
    """Mean PSNR over ``(lr_plane, hr_plane)`` pairs with inference-mode BN."""
    vals = []
    for lr, hr in validation:
        out = model.predict(lr).astype(np.float64)
        vals.append(psnr(np.clip(out, 0.0, 1.0), hr, shave))
    return float(np.mean(vals))


def train_stage(model, lr_bank, hr_bank, indices, epochs, config, optim, rng,
                stage=1, lam=0.0, budget=None):
    """Run ``epochs`` shuffled passes over ``indices``; incomplete final batches are dropped."""
    indices = np.asarray(indices)
    if len(indices) == 0:
        raise ValueError("empty training stage")
    bs = config.batch_size
    if bs > len(indices):
        raise ValueError(f"batch_size {bs} exceeds the {len(indices)} samples in stage {stage}")
    schedule = model.topology.schedule_for(lr_bank.shape[2:])
    report = StageReport(stage, lam, len(indices), optim.lr)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(indices)
        losses = []
        for b in range(len(order) // bs):
            if budget is not None and budget[0] <= 0:
                break
            batch = np.sort(order[b * bs:(b + 1) * bs])
            it = optim.step + 1
            # overflow is reported below as a NumericError instead of a warning
            with np.errstate(over="ignore", invalid="ignore"):
                out, cache = gun_forward(model, lr_bank[batch], schedule, train=True)
                loss, grad = mse_loss(out, hr_bank[batch])
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss at iteration {it} (stage {stage}, epoch {epoch})")
                grads = gun_backward(model, cache, grad)
            for name, g in grads.items():
                if not np.isfinite(g).all():
                    raise NumericError(f"non-finite gradient for {name} at iteration {it}")
            sgd_momentum_step(model.params, grads, optim)
            losses.append(loss)
            report.iterations += 1
            if budget is not None:
                budget[0] -= 1
        if not losses:
            break
        report.epoch_losses.append(float(np.mean(losses)))
        log.info("stage %d (lambda=%g) epoch %d: loss %.6g over %d iterations",
                 stage, lam, epoch, report.epoch_losses[-1], len(losses))
    return report


def train_curriculum(model, plan, lr_bank, hr_bank, config, optim=None, validation=None):
    """Train the same model through every stage of ``plan`` in order."""
    if optim is None:
        optim = OptimState.for_model(model, lr=config.lr, momentum=config.momentum,
                                     weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    loss_log = _LossLog(config.log_path)
    shave = config.shave if config.shave is not None else int(model.topology.scale)
    report = TrainReport()
    if validation:
        report.bicubic_psnr = float(np.mean(
            [psnr(bicubic_baseline(lr, int(model.topology.scale)), hr, shave) for lr, hr in validation]))
        loss_log.write(0, "bicubic", 0, None, report.bicubic_psnr)
    budget = [config.max_iterations] if config.max_iterations is not None else None
    for i, st in enumerate(plan.stages):
        if i in config.decay_at:
            optim.lr /= config.lr_decay
        sr = train_stage(model, lr_bank, hr_bank, st.indices, st.epochs, config, optim, rng,
                         stage=i + 1, lam=st.lam, budget=budget)
        if validation:
            sr.val_psnr = validation_psnr(model, validation, shave)
        for e, l in enumerate(sr.epoch_losses, 1):
            last = e == len(sr.epoch_losses)
            loss_log.write(i + 1, st.lam, e, l, sr.val_psnr if last else None)
        report.stages.append(sr)
        log.info("stage %d done: lambda=%g samples=%d val_psnr=%s",
                 i + 1, st.lam, sr.n_samples, sr.val_psnr)
        if budget is not None and budget[0] <= 0:
            break
    return report
