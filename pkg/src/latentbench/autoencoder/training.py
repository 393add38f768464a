"""Adam optimisation, cross-validated epoch selection and the embed/decode API."""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidInput, TrainingFailure
from ..numerics import as_matrix, make_rng
from .network import AeArchitecture, ae_backward, ae_forward, decode_layers, init_model, mse

log = logging.getLogger(__name__)


@dataclass
class AeTrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    l2_lambda: float = 1e-5
    max_epochs: int = 50_000
    early_stop_min_epoch: int = 300
    patience: int = 50
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInput("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be >= 1")
        if self.folds < 2:
            raise InvalidInput("folds must be >= 2")
        if self.max_epochs < 1 or self.patience < 1 or self.early_stop_min_epoch < 0:
            raise InvalidInput("max_epochs and patience must be >= 1, early_stop_min_epoch >= 0")

    def to_dict(self):
        return asdict(self)


class Adam:
    """Adam with bias correction over a dict of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class AeTrace:
    """Loss curves of the cross-validation stage and the final refit."""

    fold_val_loss: list = field(default_factory=list)
    fold_train_loss: list = field(default_factory=list)
    mean_val_loss: np.ndarray = None
    best_epoch: int = 0
    final_train_loss: list = field(default_factory=list)

    def to_dict(self):
        return {
            "fold_val_loss": [list(map(float, t)) for t in self.fold_val_loss],
            "fold_train_loss": [list(map(float, t)) for t in self.fold_train_loss],
            "mean_val_loss": [float(v) for v in self.mean_val_loss],
            "best_epoch": int(self.best_epoch),
            "final_train_loss": [float(v) for v in self.final_train_loss],
        }


def minibatches(n, batch_size, rng):
    """Shuffled index batches; a trailing batch of one row is merged into its predecessor."""
    order = rng.permutation(n)
    cuts = list(range(0, n, batch_size))[1:]
    if cuts and n - cuts[-1] == 1:
        cuts.pop()
    return np.split(order, cuts)


def _train_epoch(model, opt, x, cfg, rng):
    total = 0.0
    for rows in minibatches(x.shape[0], cfg.batch_size, rng):
        loss, grads = ae_backward(model, x[rows], cfg.l2_lambda, update_running=True)
        opt.step(model.params, grads)
        total += loss * len(rows)
    return total / x.shape[0]


def _eval_mse(model, x):
    r, _ = ae_forward(model, x, "eval")
    return mse(r, x)


def fold_indices(n, folds, seed):
    """Contiguous folds of a seeded permutation; depends only on ``(n, folds, seed)``."""
    perm = make_rng(seed, "ae-folds").permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _fit(x, arch, cfg, seed_key, n_epochs=None, x_val=None, fold=None):
    """Train one network; with ``x_val`` early stopping is active."""
    model = init_model(arch, cfg.seed)
    model.mode = "train"
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = make_rng(cfg.seed, "ae-batches", seed_key)
    train_trace, val_trace = [], []
    best, since_best = np.inf, 0
    limit = cfg.max_epochs if n_epochs is None else n_epochs
    for epoch in range(1, limit + 1):
        tr = _train_epoch(model, opt, x, cfg, rng)
        if not np.isfinite(tr):
            raise TrainingFailure(f"training loss became non-finite at epoch {epoch}", epoch=epoch, fold=fold)
        train_trace.append(tr)
        if x_val is None:
            continue
        va = _eval_mse(model, x_val)
        if not np.isfinite(va):
            raise TrainingFailure(f"validation loss became non-finite at epoch {epoch}", epoch=epoch, fold=fold)
        val_trace.append(va)
        if va < best:
            best, since_best = va, 0
        else:
            since_best += 1
        if epoch >= cfg.early_stop_min_epoch and since_best >= cfg.patience:
            break
    model.mode = "eval"
    return model, train_trace, val_trace


def ae_train(x_train, arch, cfg=None):
    """Cross-validated training.

    Stage 1 trains one network per fold and records the validation MSE of
    every epoch; early stopping can only fire once ``early_stop_min_epoch``
    epochs are done. The best epoch minimises the fold-averaged validation
    curve over the epochs every fold reached. Stage 2 retrains on all of
    ``x_train`` for exactly that many epochs.

    Returns
    -------
    model : AeModel
        Stage-2 network in eval mode.
    trace : AeTrace
    """
    cfg = cfg or AeTrainConfig()
    x = as_matrix(x_train, "x_train")
    if x.shape[1] != arch.input_dim:
        raise InvalidInput(f"x_train has {x.shape[1]} columns, architecture expects {arch.input_dim}")
    if x.shape[0] < 2 * cfg.folds:
        raise InvalidInput(f"need at least {2 * cfg.folds} rows for {cfg.folds}-fold training")
    trace = AeTrace()
    folds = fold_indices(x.shape[0], cfg.folds, cfg.seed)
    for f, val_rows in enumerate(folds):
        tr_rows = np.setdiff1d(np.arange(x.shape[0]), val_rows)
        _, tr_loss, va_loss = _fit(x[tr_rows], arch, cfg, f"fold{f}", x_val=x[val_rows], fold=f)
        log.debug("fold %d stopped after %d epochs (best val %.6g)", f, len(va_loss), min(va_loss))
        trace.fold_train_loss.append(np.array(tr_loss))
        trace.fold_val_loss.append(np.array(va_loss))
    common = min(len(t) for t in trace.fold_val_loss)
    trace.mean_val_loss = np.mean([t[:common] for t in trace.fold_val_loss], axis=0)
    trace.best_epoch = int(np.argmin(trace.mean_val_loss)) + 1
    model, final_loss, _ = _fit(x, arch, cfg, "final", n_epochs=trace.best_epoch)
    trace.final_train_loss = final_loss
    return model, trace


def ae_embed(model, x):
    """Eval-mode latent code."""
    if model.mode != "eval":
        raise InvalidInput("embedding requires an eval-mode model")
    _, z = ae_forward(model, x, "eval")
    return z


def ae_decode(model, z):
    """Eval-mode reconstruction, strictly inside (0, 1)."""
    if model.mode != "eval":
        raise InvalidInput("decoding requires an eval-mode model")
    return decode_layers(model, z)


def arch_for(input_dim, latent_dim, hidden=None):
    return AeArchitecture(input_dim, tuple(hidden) if hidden is not None else (500, 250, 125), latent_dim)
