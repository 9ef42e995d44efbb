"""Adagrad minibatch training with per-minibatch L2 and dev-set model selection."""
from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import SentencePairModel, l2_penalty

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 25
    l2_lambda: float = 1e-4
    dropout: float = 0.5
    epochs: int = 10
    hidden_dim: int = 150
    embedding_dim: int = 300
    mlp_hidden: int = 50
    seed: int = 0
    task: str = "sick"
    variant: str = "attentive-lstm"
    adagrad_eps: float = 1e-8

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("hidden_dim", "embedding_dim", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        return self

    def updated(self, **overrides):
        known = {f.name for f in dataclasses.fields(self)}
        bad = sorted(set(overrides) - known)
        if bad:
            raise ConfigError(f"unknown config keys: {bad}")
        return dataclasses.replace(self, **overrides).validate()


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    """Read an INI file with a ``[train]`` section of TrainConfig keys.

    Example::

        [train]
        task = sick
        variant = attentive-lstm
        epochs = 10
    """
    base = base or TrainConfig()
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not parser.has_section("train"):
        raise ConfigError(f"{path}: missing [train] section")
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    overrides = {}
    for key, raw in parser.items("train"):
        if key not in types:
            raise ConfigError(f"{path}: unknown key {key!r}")
        overrides[key] = coerce(key, raw, types[key])
    return base.updated(**overrides)


def coerce(key, raw, typ):
    caster = {"float": float, "int": int, "str": str}.get(typ if isinstance(typ, str) else typ.__name__)
    try:
        return caster(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None


@dataclass
class AdagradState:
    accum: dict = field(default_factory=dict)
    eps: float = 1e-8


def adagrad_step(params, state: AdagradState, lr: float):
    """G += g*g; theta -= lr*g/(sqrt(G)+eps); gradients are zeroed afterwards."""
    for p in params:
        G = state.accum.get(p.name)
        if G is None:
            G = state.accum[p.name] = np.zeros_like(p.value)
        g = p.grad
        G += g * g
        p.value -= lr * g / (np.sqrt(G) + state.eps)
        p.zero_grad()


@dataclass
class EpochReport:
    epoch: int
    mean_loss: float
    batches: int


def train_epoch(model: SentencePairModel, data, vocab, config: TrainConfig, rng, state: AdagradState, epoch=0):
    """One pass over ``data`` in a seeded shuffled order.

    Each minibatch contributes mean(example losses) + (lambda/2)||theta||^2 to
    the gradient before a single Adagrad step. The reported loss is the mean
    over examples of the data term.
    """
    if not data:
        raise ValueError("train_epoch: no training data")
    params = model.parameters()
    model.zero_grad()
    order = rng.permutation(len(data))
    total = 0.0
    nb = 0
    for start in range(0, len(order), config.batch_size):
        batch = order[start:start + config.batch_size]
        inv = 1.0 / len(batch)
        for i in batch:
            loss = model.loss(data[i], vocab, config.dropout, rng)
            v = float(loss.value)
            if not math.isfinite(v):
                raise NumericError(f"non-finite loss {v} at example index {int(i)} (id {data[i].id!r})")
            total += v
            ad.backward(loss, seed=inv)
        if config.l2_lambda > 0:
            ad.backward(l2_penalty(params, config.l2_lambda))
        adagrad_step(params, state, config.learning_rate)
        nb += 1
    return EpochReport(epoch, total / len(data), nb)


def predict_all(model, data, vocab):
    return [model.predict(ex, vocab) for ex in data]


def dev_metric(model, data, vocab):
    """Pearson r for similarity models, accuracy for binary ones."""
    from .metrics import ZeroVarianceError, accuracy_f1, pearson

    preds = predict_all(model, data, vocab)
    if model.num_classes == 2:
        return accuracy_f1([p.label for p in preds], [int(ex.label) for ex in data])[0]
    try:
        return pearson([p.score for p in preds], [ex.label for ex in data])
    except ZeroVarianceError:
        return float("nan")


@dataclass
class FitResult:
    model: SentencePairModel
    history: list[dict]
    best_epoch: int | None
    best_metric: float | None


def fit(model, train, dev, vocab, config: TrainConfig, metric=None, history_path=None):
    """Train for ``config.epochs`` epochs and keep the parameters with the best dev metric.

    ``metric(model) -> float`` overrides the default dev metric. Each epoch
    appends ``{"epoch", "train_loss", "dev_metric"}`` to the history (and,
    with ``history_path``, as a JSON line to that file).
    """
    config.validate()
    metric = metric or (lambda m: dev_metric(m, dev, vocab))
    rng = np.random.default_rng(config.seed)
    state = AdagradState(eps=config.adagrad_eps)
    best_state = model.state_dict()
    best_metric = None
    best_epoch = None
    history = []
    sink = open(history_path, "w", encoding="utf-8") if history_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            rep = train_epoch(model, train, vocab, config, rng, state, epoch)
            score = float(metric(model))
            rec = {"epoch": epoch, "train_loss": rep.mean_loss, "dev_metric": score}
            history.append(rec)
            log.info("epoch %d loss %.4f dev %.4f", epoch, rep.mean_loss, score)
            if sink:
                sink.write(json.dumps(rec) + "\n")
                sink.flush()
            if not math.isnan(score) and (best_metric is None or score > best_metric):
                best_metric, best_epoch = score, epoch
                best_state = model.state_dict()
    finally:
        if sink:
            sink.close()
    best = model.copy()
    best.load_state_dict(best_state)
    return FitResult(best, history, best_epoch, best_metric)
