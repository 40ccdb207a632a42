"""SGD training loops: teacher pretraining and student distillation
under the relation-matching, instance-matching, plain-CE, and baseline
objectives."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .baselines import angular_relations, gram_inter_class, gram_inter_sample
from .data import AugmentSpec, Dataset, virtual_batch
from .errors import NumericError, ParameterError, TrainingError
from .graphs import LogitBatch
from .losses import VRMWeights, total_loss
from .models import MLP, MLPSpec

OBJECTIVES = ("vrm", "im_kd", "ce_only", "gram", "angular")


@dataclass
class TrainConfig:
    """Optimizer, schedule, and objective hyperparameters for one run."""

    weights: VRMWeights = field(default_factory=VRMWeights)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay: float = 0.1
    milestones: tuple = (30, 40, 50)
    batch_size: int = 32
    epochs: int = 60
    seed: int = 0
    im_kd_weight: float = 1.0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ParameterError("relations need batches of at least 2")
        stones = tuple(self.milestones)
        if any(b >= a for a, b in zip(stones[1:], stones)):
            raise ParameterError("milestones must be strictly increasing")
        self.milestones = stones
        if self.epochs < 1:
            raise ParameterError("epochs must be positive")
        if self.lr <= 0:
            raise ParameterError("learning rate must be positive")

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.milestones if epoch >= m)
        return self.lr * self.lr_decay ** passed


class SGD:
    """Momentum SGD with decoupled-from-nothing classic weight decay."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_acc: float
    val_acc: float
    total: float
    ce_real: float
    ce_virtual: float
    isv: float
    icv: float
    kept_isv_frac: float
    kept_icv_frac: float


def accuracy(model: MLP, inputs: np.ndarray, labels: np.ndarray) -> float:
    if inputs.shape[0] == 0:
        return 0.0
    return float((model.predict(inputs) == labels).mean())


def _epoch_batches(n_train: int, batch_size: int, seed: int, epoch: int):
    """Seeded shuffle, full batches only (relations need pairs)."""
    rng = np.random.default_rng([seed, 7919, epoch])
    perm = rng.permutation(n_train)
    n_batches = n_train // batch_size
    for b in range(n_batches):
        yield perm[b * batch_size:(b + 1) * batch_size]


def _step_loss(objective, model, teacher, xb, yb, xv, config):
    """Returns (loss tensor, components dict, kept fractions)."""
    w = config.weights
    if objective == "ce_only":
        loss = ad.cross_entropy(model(xb), yb)
        parts = {"ce_real": loss.item(), "ce_virtual": 0.0, "isv": 0.0, "icv": 0.0}
        return loss, parts, (0.0, 0.0)

    if objective == "vrm":
        s_batch = LogitBatch(model(xb), model(xv))
        with ad.no_grad():
            t_batch = LogitBatch(Tensor(teacher.logits(xb)), Tensor(teacher.logits(xv)))
        bd = total_loss(s_batch, t_batch, yb, w)
        parts = {"ce_real": bd.ce_real.item(), "ce_virtual": bd.ce_virtual.item(),
                 "isv": bd.isv.item(), "icv": bd.icv.item()}
        b, c = s_batch.batch_size, s_batch.n_classes
        return bd.total, parts, (bd.kept_isv / (b * b), bd.kept_icv / (c * c))

    # classic single-view distillation arms: no virtual views, so any
    # difference against vrm comes from the objective itself
    s_logits = model(xb)
    with ad.no_grad():
        t_logits = Tensor(teacher.logits(xb))
    ce = ad.cross_entropy(s_logits, yb)

    if objective == "im_kd":
        kl = ad.kld(t_logits, s_logits, w.tau)
        loss = ce + kl * config.im_kd_weight
        parts = {"ce_real": ce.item(), "ce_virtual": 0.0, "isv": kl.item(), "icv": 0.0}
        return loss, parts, (1.0, 1.0)

    s_soft = ad.softmax(s_logits, axis=1, tau=w.tau)
    with ad.no_grad():
        t_soft = ad.softmax(t_logits, axis=1, tau=w.tau)
    if objective == "gram":
        rel_is = ad.huber(gram_inter_sample(s_soft), gram_inter_sample(t_soft).detach(),
                          w.huber_delta).mean()
        rel_ic = ad.huber(gram_inter_class(s_soft), gram_inter_class(t_soft).detach(),
                          w.huber_delta).mean()
        loss = ce + rel_is * w.alpha + rel_ic * w.beta
        parts = {"ce_real": ce.item(), "ce_virtual": 0.0,
                 "isv": rel_is.item(), "icv": rel_ic.item()}
    elif objective == "angular":
        rel = ad.huber(angular_relations(s_soft), angular_relations(t_soft).detach(),
                       w.huber_delta).mean()
        loss = ce + rel * w.alpha
        parts = {"ce_real": ce.item(), "ce_virtual": 0.0, "isv": rel.item(), "icv": 0.0}
    else:
        raise ParameterError(f"unknown objective {objective!r}")
    return loss, parts, (1.0, 1.0)


def _train(model: MLP, teacher, data: Dataset, config: TrainConfig,
           objective: str) -> list[EpochRecord]:
    needs_virtual = objective == "vrm"
    params = model.parameters()
    opt = SGD(params, config.lr, config.momentum, config.weight_decay)
    records: list[EpochRecord] = []
    x_train, y_train = data.train_inputs, data.train_labels

    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        sums = {"total": 0.0, "ce_real": 0.0, "ce_virtual": 0.0, "isv": 0.0, "icv": 0.0}
        kept = [0.0, 0.0]
        n_steps = 0
        for step, batch_idx in enumerate(_epoch_batches(
                x_train.shape[0], config.batch_size, config.seed, epoch)):
            xb, yb = x_train[batch_idx], y_train[batch_idx]
            xv = (virtual_batch(xb, config.augment, (epoch, step))
                  if needs_virtual else None)
            try:
                loss, parts, fracs = _step_loss(objective, model, teacher, xb, yb, xv, config)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise NumericError("loss is not finite")
                opt.zero_grad()
                backward(loss)
                opt.step()
            except NumericError as exc:
                raise TrainingError(f"diverged at epoch {epoch}: {exc}", epoch=epoch) from exc
            sums["total"] += loss_val
            for k in ("ce_real", "ce_virtual", "isv", "icv"):
                sums[k] += parts[k]
            kept[0] += fracs[0]
            kept[1] += fracs[1]
            n_steps += 1

        denom = max(n_steps, 1)
        records.append(EpochRecord(
            epoch=epoch,
            lr=opt.lr,
            train_acc=accuracy(model, x_train, y_train),
            val_acc=accuracy(model, data.val_inputs, data.val_labels),
            total=sums["total"] / denom,
            ce_real=sums["ce_real"] / denom,
            ce_virtual=sums["ce_virtual"] / denom,
            isv=sums["isv"] / denom,
            icv=sums["icv"] / denom,
            kept_isv_frac=kept[0] / denom,
            kept_icv_frac=kept[1] / denom,
        ))
    return records


def train_teacher(spec: MLPSpec, data: Dataset, config: TrainConfig):
    """Label-only SGD training; returns (model, per-epoch records)."""
    model = MLP(spec)
    records = _train(model, None, data, config, "ce_only")
    return model, records


def distill_student(student_spec: MLPSpec, teacher: MLP | None, data: Dataset,
                    config: TrainConfig, objective: str = "vrm"):
    """Train a student under the chosen objective with a frozen teacher.

    Every step generates fresh virtual views (the same views are fed to
    teacher and student), evaluates the objective, and applies one SGD
    update.  ``ce_only`` ignores the teacher and skips view generation,
    which makes it identical to :func:`train_teacher` on the student
    architecture.
    """
    if objective not in OBJECTIVES:
        raise ParameterError(f"objective must be one of {OBJECTIVES}")
    if objective != "ce_only" and teacher is None:
        raise ParameterError(f"objective {objective!r} needs a teacher")
    student = MLP(student_spec)
    records = _train(student, teacher, data, config, objective)
    return student, records


# -- metrics files --------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_metrics_csv(records: list[EpochRecord], path) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_acc", "val_acc"])
        for r in records:
            writer.writerow([r.epoch, _fmt(r.lr), _fmt(r.train_acc), _fmt(r.val_acc)])


def write_breakdown_csv(records: list[EpochRecord], path) -> None:
    cols = ["total", "ce_real", "ce_virtual", "isv", "icv",
            "kept_isv_frac", "kept_icv_frac"]
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch"] + cols)
        for r in records:
            writer.writerow([r.epoch] + [_fmt(getattr(r, c)) for c in cols])
