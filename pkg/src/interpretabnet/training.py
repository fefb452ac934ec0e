"""Self-supervised pretraining and supervised fine-tuning.

Both phases use SGD with momentum and weight decay, early stopping on the
validation loss, and keep the parameters from the best validation epoch.
Fine-tuning additionally reduces the learning rate on plateaus.
"""
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numeric as nx
from .errors import ConfigError, DataError
from .metrics import auc
from .model import ArchConfig, InterpreTabNet

log = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-8


@dataclass
class TrainConfig:
    lr0: float = 0.1
    momentum: float = 0.938
    weight_decay: float = 1e-4
    batch: int = 64
    virtual_batch: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 20
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    min_lr: float = 1e-5
    seed: int = 0
    pretrain_mask_prob: float = 0.2
    scheduler: bool = True
    # "loss" or "auc"; what early stopping and the scheduler watch
    monitor: str = "loss"
    # global gradient-norm clip; 0 disables
    grad_clip: float = 1.0

    def __post_init__(self):
        for name in ("batch", "virtual_batch", "max_epochs", "early_stop_patience", "plateau_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0.0 < self.plateau_factor < 1.0):
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if not (0.0 <= self.pretrain_mask_prob < 1.0):
            raise ConfigError("pretrain_mask_prob must lie in [0, 1)")
        if self.monitor not in ("loss", "auc"):
            raise ConfigError(f"monitor must be 'loss' or 'auc', got {self.monitor!r}")

    @classmethod
    def pretraining(cls, **overrides):
        base = dict(batch=1024, virtual_batch=128, scheduler=False)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def finetuning(cls, **overrides):
        base = dict(batch=64, virtual_batch=32, scheduler=True)
        base.update(overrides)
        return cls(**base)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    def append(self, **record):
        self.records.append(record)

    def without_timing(self):
        return [{k: v for k, v in r.items() if k != "wall_time"} for r in self.records]

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
            fh.write(json.dumps({"stop_reason": self.stop_reason, "best_epoch": self.best_epoch,
                                 "best_val_loss": self.best_val_loss}, sort_keys=True) + "\n")


def sgd_step(params, grads, velocity, lr, momentum, weight_decay):
    """In-place SGD with momentum: v <- m*v + (g + wd*p); p <- p - lr*v."""
    for p, g, v in zip(params, grads, velocity):
        v *= momentum
        v += g + weight_decay * p
        p -= lr * v
    return params, velocity


class SGD:
    def __init__(self, params, lr, momentum, weight_decay):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        nx.zero_grads(self.params)

    def step(self, clip=0.0):
        grads = [p.grad for p in self.params]
        if clip > 0:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > clip:
                grads = [g * (clip / norm) for g in grads]
        sgd_step([p.data for p in self.params], grads, self.velocity,
                 self.lr, self.momentum, self.weight_decay)


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr, factor=0.1, patience=5, min_lr=1e-5):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = float("inf")
        self.bad_epochs = 0

    def step(self, val_loss):
        if val_loss < self.best - IMPROVEMENT_EPS:
            self.best = val_loss
            self.bad_epochs = 0
            return self.lr
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
        return self.lr


def plateau_step(scheduler, val_loss):
    return scheduler.step(val_loss)


class EarlyStopping:
    def __init__(self, patience):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.epoch = 0

    def step(self, val_loss):
        """Record one epoch; return True if this epoch is the new best."""
        self.epoch += 1
        if val_loss < self.best - IMPROVEMENT_EPS:
            self.best = val_loss
            self.best_epoch = self.epoch
            return True
        return False

    @property
    def should_stop(self):
        return self.epoch - self.best_epoch >= self.patience


def cross_entropy(probs, labels, floor=1e-12):
    """Mean negative log-likelihood of ``labels`` under row-simplex ``probs``."""
    labels = np.asarray(labels)
    probs_t = nx.as_tensor(probs)
    if labels.size and (labels.min() < 0 or labels.max() >= probs_t.cols):
        raise DataError(f"label out of range for {probs_t.cols} classes")
    return nx.cross_entropy(probs_t, labels, floor)


def classification_loss(model, x, y):
    logits, masks = model.logits(x)
    loss = nx.cross_entropy(nx.softmax_rows(logits), y)
    if model.config.sparsity_coeff > 0:
        loss = loss + model.mask_entropy(masks) * model.config.sparsity_coeff
    return loss


def reconstruction_loss(model, x, mask):
    """Mean squared error on the entries hidden by ``mask`` (1 = hidden)."""
    x = np.asarray(x, dtype=np.float64)
    n_hidden = float(mask.sum())
    if n_hidden == 0:
        return nx.Tensor([[0.0]])
    _, _, steps = model.encoder_forward(x * (1.0 - mask))
    recon = model.decoder_forward(steps)
    err = (recon - x) * mask
    return nx.square(err).sum() * (1.0 / n_hidden)


def _batches(n, batch, rng):
    order = rng.permutation(n)
    return [order[i:i + batch] for i in range(0, n, batch)]


def _eval_classification(model, x, y, batch=4096):
    probs = model.predict_proba(x, batch)
    loss = float(nx.cross_entropy(nx.Tensor(probs), y).item())
    acc = float((probs.argmax(axis=1) == y).mean())
    try:
        score = auc(y, probs)
    except DataError:
        score = float("nan")
    return loss, acc, score


def _eval_reconstruction(model, x, mask, batch=4096):
    model.eval()
    total, hidden = 0.0, 0.0
    for lo in range(0, x.shape[0], batch):
        xb, mb = x[lo:lo + batch], mask[lo:lo + batch]
        n = float(mb.sum())
        if n == 0:
            continue
        total += reconstruction_loss(model, xb, mb).item() * n
        hidden += n
    return total / hidden if hidden else 0.0


def _check_features(x, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError(f"{what} is empty")
    return x


def pretrain(train_x, val_x, config=None, arch=None, n_classes=2, model=None):
    """Masked-reconstruction pretraining; returns (model, TrainLog).

    Each batch hides a Bernoulli(pretrain_mask_prob) subset of cells and the
    loss is the squared error on those cells only.
    """
    config = config or TrainConfig.pretraining()
    arch = arch or ArchConfig(virtual_batch_size=config.virtual_batch)
    train_x = _check_features(train_x, "pretraining data")
    val_x = _check_features(val_x, "pretraining validation data") if val_x is not None else train_x
    if model is None:
        model = InterpreTabNet(train_x.shape[1], n_classes, arch, seed=config.seed)
    model.set_virtual_batch_size(config.virtual_batch)
    rng = np.random.default_rng(config.seed)
    val_mask = (np.random.default_rng(config.seed + 1).random(val_x.shape)
                < config.pretrain_mask_prob).astype(np.float64)
    params = model.encoder_parameters() + [p for n, p in model.named_parameters() if n.startswith("dec_")]
    opt = SGD(params, config.lr0, config.momentum, config.weight_decay)
    return _fit(model, opt, config, rng,
                n_rows=train_x.shape[0],
                batch_loss=lambda idx, r: reconstruction_loss(
                    model, train_x[idx],
                    (r.random((len(idx), train_x.shape[1])) < config.pretrain_mask_prob).astype(np.float64)),
                evaluate=lambda: (_eval_reconstruction(model, val_x, val_mask), {}),
                scheduler=None)


def finetune(train_x, train_y, val_x, val_y, config=None, arch=None, init=None, n_classes=None):
    """Supervised training on cross-entropy; returns (model, TrainLog).

    ``init`` may be a pretrained model whose encoder (and running statistics)
    seed the new model.
    """
    config = config or TrainConfig.finetuning()
    train_x = _check_features(train_x, "training data")
    val_x = _check_features(val_x, "validation data")
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    if np.unique(train_y).size < 2:
        raise DataError("training labels contain a single class")
    n_classes = n_classes or int(max(train_y.max(), val_y.max())) + 1
    if init is not None:
        arch = init.config
    arch = arch or ArchConfig(virtual_batch_size=config.virtual_batch)
    model = InterpreTabNet(train_x.shape[1], n_classes, arch, seed=config.seed)
    if init is not None:
        warm = {k: v for k, v in init.state_arrays().items() if not k.startswith(("head.", "dec_"))}
        model.load_state_arrays(warm, strict=False)
    model.set_virtual_batch_size(config.virtual_batch)
    rng = np.random.default_rng(config.seed)
    opt = SGD(model.encoder_parameters() + model.head.parameters(),
              config.lr0, config.momentum, config.weight_decay)
    scheduler = (PlateauScheduler(config.lr0, config.plateau_factor, config.plateau_patience, config.min_lr)
                 if config.scheduler else None)

    def evaluate():
        loss, acc, score = _eval_classification(model, val_x, val_y)
        monitored = loss if config.monitor == "loss" else -score
        return monitored, {"val_ce": loss, "val_accuracy": acc, "val_auc": score}

    return _fit(model, opt, config, rng,
                n_rows=train_x.shape[0],
                batch_loss=lambda idx, r: classification_loss(model, train_x[idx], train_y[idx]),
                evaluate=evaluate,
                scheduler=scheduler)


def _fit(model, opt, config, rng, n_rows, batch_loss, evaluate, scheduler):
    trainlog = TrainLog()
    stopper = EarlyStopping(config.early_stop_patience)
    best_state = model.state_arrays()
    start = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        total, seen = 0.0, 0
        for idx in _batches(n_rows, config.batch, rng):
            opt.zero_grad()
            loss = batch_loss(idx, rng)
            if loss.requires_grad:
                loss.backward()
                opt.step(config.grad_clip)
            total += loss.item() * len(idx)
            seen += len(idx)
        val_loss, extra = evaluate()
        if not np.isfinite(val_loss):
            raise nx.NumericError(f"validation loss became non-finite at epoch {epoch}", op="evaluate")
        trainlog.append(epoch=epoch, train_loss=total / seen, val_loss=val_loss, lr=opt.lr,
                        wall_time=round(time.perf_counter() - start, 3), **extra)
        log.debug("epoch %d train %.5f val %.5f lr %g", epoch, total / seen, val_loss, opt.lr)
        if stopper.step(val_loss):
            best_state = model.state_arrays()
        if scheduler is not None:
            opt.lr = scheduler.step(val_loss)
        if stopper.should_stop:
            trainlog.stop_reason = "early_stop"
            break
    else:
        trainlog.stop_reason = "max_epochs"
    trainlog.best_epoch = stopper.best_epoch
    trainlog.best_val_loss = stopper.best
    model.load_state_arrays(best_state)
    model.eval()
    return model, trainlog


def train_config_dict(config):
    return asdict(config)
