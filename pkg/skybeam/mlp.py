"""
A fully-connected ReLU classifier over beam indices, trained with Adam on the
cross-entropy loss.
"""

# Standard library
import os
from dataclasses import dataclass, replace

# Third-party
import h5py
import numpy as np
import yaml
from astropy.table import Table
from scipy.special import logsumexp, softmax

# Project
from .dataset import Dataset, Normalizer
from .exceptions import DataError, NumericError
from .logging import logger
from .oracle import BeamLabel, rank_beams
from .utils import atomic_path

__all__ = [
    "AdamState",
    "Checkpoint",
    "MlpArchitecture",
    "MlpModel",
    "TrainConfig",
    "adam_step",
    "forward",
    "loss_and_gradients",
    "predict_topk",
    "train",
]

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpArchitecture:
    """
    Layer sizes of the classifier.

    Parameters
    ----------
    input_dim : int
        Number of input features.
    output_dim : int (optional)
        Number of beams, Q.
    hidden_dims : tuple (optional)
        Width of each ReLU hidden layer.
    """

    input_dim: int
    output_dim: int = 32
    hidden_dims: tuple = (512, 512)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        for name in ["input_dim", "output_dim"]:
            object.__setattr__(self, name, int(getattr(self, name)))

        if any(d < 1 for d in self.dims):
            msg = f"All layer sizes must be at least 1, got {self.dims}"
            raise ValueError(msg)

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)


class MlpModel:
    """
    Parameters of a fully-connected network.

    Parameters
    ----------
    architecture : `~skybeam.mlp.MlpArchitecture`
    layers : list
        One ``(W, b)`` pair per layer, with ``W`` of shape ``(n_in, n_out)``.
    rng_seed : int (optional)
        The seed the parameters were initialized with.
    """

    def __init__(self, architecture, layers, rng_seed=None):
        self.architecture = architecture
        self.rng_seed = rng_seed

        dims = architecture.dims
        layers = [(np.asarray(W, dtype=float), np.asarray(b, dtype=float)) for W, b in layers]
        if len(layers) != len(dims) - 1:
            msg = f"Expected {len(dims) - 1} layers, got {len(layers)}"
            raise ValueError(msg)

        for i, (W, b) in enumerate(layers):
            if W.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                msg = (
                    f"Layer {i} has weight shape {W.shape} and bias shape {b.shape}, "
                    f"expected {(dims[i], dims[i + 1])} and {(dims[i + 1],)}"
                )
                raise ValueError(msg)
        self.layers = layers

    @classmethod
    def initialize(cls, architecture, seed=None):
        """
        Randomly initialize a network.

        Hidden-layer weights are normal with standard deviation
        ``sqrt(2 / fan_in)``; output-layer weights are standard normal; all
        biases are zero.
        """
        rng = np.random.default_rng(seed)
        dims = architecture.dims
        layers = []
        for i in range(len(dims) - 1):
            scale = 1.0 if i == len(dims) - 2 else np.sqrt(2.0 / dims[i])
            W = rng.normal(0.0, scale, size=(dims[i], dims[i + 1]))
            layers.append((W, np.zeros(dims[i + 1])))
        return cls(architecture, layers, rng_seed=seed)

    @property
    def num_parameters(self):
        return sum(W.size + b.size for W, b in self.layers)

    def logits(self, X):
        a = X
        for W, b in self.layers[:-1]:
            a = np.maximum(a @ W + b, 0.0)
        W, b = self.layers[-1]
        return a @ W + b

    def copy(self):
        return self.__class__(
            self.architecture,
            [(W.copy(), b.copy()) for W, b in self.layers],
            rng_seed=self.rng_seed,
        )

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return self.architecture == other.architecture and all(
            np.array_equal(W1, W2) and np.array_equal(b1, b2)
            for (W1, b1), (W2, b2) in zip(self.layers, other.layers)
        )

    def __repr__(self):
        dims = " -> ".join(str(d) for d in self.architecture.dims)
        return f"<MlpModel: {dims}>"


def _as_inputs(model, features):
    X = np.asarray(features, dtype=float)
    if X.shape[-1] != model.architecture.input_dim:
        msg = (
            f"Expected {model.architecture.input_dim} input features, got "
            f"{X.shape[-1]}"
        )
        raise ValueError(msg)
    return X


def forward(model, features):
    """
    Class probabilities for one feature vector or a batch.

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    features : array_like
        Shape ``(input_dim,)`` or ``(N, input_dim)``.

    Returns
    -------
    probs : `numpy.ndarray`
        Shape ``(Q,)`` or ``(N, Q)``; each row sums to 1.
    """
    X = _as_inputs(model, features)
    return softmax(model.logits(X), axis=-1)


def _unpack_batch(batch, labels):
    if labels is not None:
        X = np.asarray(batch, dtype=float)
        y = np.asarray([int(lbl) for lbl in np.atleast_1d(labels)], dtype=int)
    else:
        batch = list(batch)
        if len(batch) == 0:
            raise DataError("Cannot compute the loss of an empty batch")
        X = np.stack([ex.features for ex in batch])
        y = np.array([ex.label.index for ex in batch], dtype=int)

    if X.ndim != 2 or len(X) == 0:
        raise DataError("Cannot compute the loss of an empty batch")
    if len(X) != len(y):
        msg = f"Got {len(X)} feature vectors but {len(y)} labels"
        raise DataError(msg)
    return X, y


def loss_and_gradients(model, batch, labels=None):
    """
    Mean cross-entropy loss of a batch and its gradient by backpropagation.

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    batch : list of `~skybeam.dataset.LabeledExample`, array_like
        Either labeled examples, or a ``(B, input_dim)`` feature array when
        ``labels`` is given.
    labels : array_like (optional)
        Integer beam indices for a feature-array batch.

    Returns
    -------
    loss : float
    gradients : list
        ``(dW, db)`` for each layer, with the shapes of the parameters.
    """
    X, y = _unpack_batch(batch, labels)
    X = _as_inputs(model, X)
    n_out = model.architecture.output_dim
    if np.any(y < 0) or np.any(y >= n_out):
        msg = f"Labels must be beam indices in [0, {n_out})"
        raise DataError(msg)

    # forward pass, keeping pre-activations
    acts = [X]
    pre = []
    for W, b in model.layers[:-1]:
        z = acts[-1] @ W + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0))
    W, b = model.layers[-1]
    logits = acts[-1] @ W + b

    B = len(X)
    rows = np.arange(B)
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[rows, y]))

    dz = softmax(logits, axis=1)
    dz[rows, y] -= 1.0
    dz /= B

    grads = []
    for i in range(len(model.layers) - 1, -1, -1):
        W, _ = model.layers[i]
        grads.append((acts[i].T @ dz, dz.sum(axis=0)))
        if i > 0:
            dz = (dz @ W.T) * (pre[i - 1] > 0)

    return loss, grads[::-1]


@dataclass
class AdamState:
    """First and second moment estimates of the Adam optimizer."""

    t: int = 0
    m: list = None
    v: list = None

    @classmethod
    def zeros(cls, model):
        return cls(
            t=0,
            m=[(np.zeros_like(W), np.zeros_like(b)) for W, b in model.layers],
            v=[(np.zeros_like(W), np.zeros_like(b)) for W, b in model.layers],
        )


def adam_step(model, gradients, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    Apply one bias-corrected Adam update.

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    gradients : list
        ``(dW, db)`` per layer, as from `~skybeam.mlp.loss_and_gradients`.
    state : `~skybeam.mlp.AdamState`
    lr : float
    beta1, beta2, eps : float (optional)

    Returns
    -------
    model : `~skybeam.mlp.MlpModel`
    state : `~skybeam.mlp.AdamState`
    """
    if state.m is None:
        state = AdamState.zeros(model)

    if len(gradients) != len(model.layers):
        msg = f"Expected gradients for {len(model.layers)} layers, got {len(gradients)}"
        raise ValueError(msg)

    t = state.t + 1
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t

    layers, ms, vs = [], [], []
    for params, grads, m_l, v_l in zip(model.layers, gradients, state.m, state.v):
        new_p, new_m, new_v = [], [], []
        for p, g, m, v in zip(params, grads, m_l, v_l):
            g = np.asarray(g, dtype=float)
            if g.shape != p.shape:
                msg = f"Gradient shape {g.shape} does not match parameter shape {p.shape}"
                raise ValueError(msg)
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g**2
            new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
            new_m.append(m)
            new_v.append(v)
        layers.append(tuple(new_p))
        ms.append(tuple(new_m))
        vs.append(tuple(new_v))

    new_model = MlpModel(model.architecture, layers, rng_seed=model.rng_seed)
    return new_model, AdamState(t=t, m=ms, v=vs)


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer and schedule settings.

    The learning rate starts at ``initial_lr`` and is multiplied by
    ``lr_factor`` at the start of each epoch listed in ``lr_decay_epochs``
    (zero-based).
    """

    batch_size: int = 32
    initial_lr: float = 1e-2
    lr_decay_epochs: tuple = (20, 40, 80)
    lr_factor: float = 0.1
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))
        if self.initial_lr < 0:
            raise ValueError("initial_lr must be nonnegative")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must be between 0 and 1")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")

    def lr_at(self, epoch):
        n_decays = sum(1 for e in self.lr_decay_epochs if e <= epoch)
        return self.initial_lr * self.lr_factor**n_decays

    def replace(self, **kwargs):
        return replace(self, **kwargs)


def _training_arrays(train_set):
    if isinstance(train_set, Dataset):
        ids = train_set.sample_ids
        X = train_set.features
        y = train_set.labels
    else:
        examples = list(train_set)
        if len(examples) == 0:
            raise DataError("Cannot train on an empty training set")
        ids = np.array([ex.sample_id for ex in examples])
        X = np.stack([ex.features for ex in examples])
        y = np.array([ex.label.index for ex in examples], dtype=int)

    if len(X) == 0:
        raise DataError("Cannot train on an empty training set")

    # canonical order by sample id
    order = np.argsort(ids, kind="stable")
    return X[order], y[order]


def train(model, train_set, cfg, callback=None):
    """
    Train a network with mini-batch Adam.

    Every epoch visits the training set in a random order drawn from
    ``(cfg.seed, epoch)``; the last partial batch is kept.

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    train_set : `~skybeam.dataset.Dataset`, list of `~skybeam.dataset.LabeledExample`
    cfg : `~skybeam.mlp.TrainConfig`
    callback : callable (optional)
        Called as ``callback(epoch, model)`` after each epoch.

    Returns
    -------
    model : `~skybeam.mlp.MlpModel`
    history : `~astropy.table.Table`
        Learning rate, mean training loss and training top-1 accuracy per
        epoch.
    """
    X, y = _training_arrays(train_set)
    n = len(X)

    state = AdamState.zeros(model)
    rows = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        rng = np.random.default_rng([cfg.seed, epoch])
        perm = rng.permutation(n)

        total = 0.0
        for i1 in range(0, n, cfg.batch_size):
            idx = perm[i1 : i1 + cfg.batch_size]
            loss, grads = loss_and_gradients(model, X[idx], y[idx])
            if not np.isfinite(loss):
                msg = f"Non-finite training loss at epoch {epoch}"
                raise NumericError(msg)

            model, state = adam_step(
                model,
                grads,
                state,
                lr,
                beta1=cfg.adam_beta1,
                beta2=cfg.adam_beta2,
                eps=cfg.adam_eps,
            )
            total += loss * len(idx)

        if not all(np.all(np.isfinite(W)) and np.all(np.isfinite(b)) for W, b in model.layers):
            msg = f"Non-finite network parameters after epoch {epoch}"
            raise NumericError(msg)

        top1 = float(np.mean(np.argmax(model.logits(X), axis=1) == y))
        rows.append((epoch, lr, total / n, top1))
        logger.debug(f"epoch {epoch}: lr={lr:.1e} loss={total / n:.4f} top1={top1:.4f}")

        if callback is not None:
            callback(epoch, model)

    history = Table(rows=rows, names=("epoch", "lr", "loss", "top1"))
    logger.info(
        f"Trained for {cfg.epochs} epochs: final loss {history['loss'][-1]:.4f}, "
        f"train top-1 {history['top1'][-1]:.4f}"
    )
    return model, history


def predict_topk(model, features, k):
    """
    The ``k`` most probable beams, best first, ties to the lowest index.

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    features : array_like
        Shape ``(input_dim,)`` or ``(N, input_dim)``.
    k : int

    Returns
    -------
    labels : list of `~skybeam.oracle.BeamLabel`
        For a batch, a list of such lists.
    """
    q = model.architecture.output_dim
    if int(k) != k or not 1 <= k <= q:
        msg = f"k must be an integer between 1 and {q}, got {k}"
        raise ValueError(msg)

    probs = forward(model, features)
    idx = rank_beams(probs, k)
    if idx.ndim == 1:
        return [BeamLabel(int(i), q) for i in idx]
    return [[BeamLabel(int(i), q) for i in row] for row in idx]


class Checkpoint:
    """
    A trained network together with what is needed to apply it: the feature
    normalizer and the run metadata (configuration hash, feature set,
    codebook size, split settings).

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    normalizer : `~skybeam.dataset.Normalizer` (optional)
    meta : dict (optional)
    """

    def __init__(self, model, normalizer=None, meta=None):
        self.model = model
        self.normalizer = normalizer
        self.meta = dict(meta) if meta is not None else {}

    def write(self, filename, overwrite=False):
        """Write the checkpoint to an HDF5 file."""
        if os.path.exists(filename) and not overwrite:
            msg = f"File {filename} already exists. Use overwrite=True to replace it."
            raise OSError(msg)

        arch = self.model.architecture
        with atomic_path(filename) as tmp:
            with h5py.File(tmp, "w") as f:
                f.attrs["format_version"] = CHECKPOINT_VERSION
                f.attrs["input_dim"] = arch.input_dim
                f.attrs["output_dim"] = arch.output_dim
                f.attrs["hidden_dims"] = np.array(arch.hidden_dims, dtype=np.int64)
                f.attrs["meta"] = yaml.safe_dump(self.meta, sort_keys=True)
                if self.model.rng_seed is not None:
                    f.attrs["rng_seed"] = int(self.model.rng_seed)

                g = f.create_group("layers")
                for i, (W, b) in enumerate(self.model.layers):
                    g.create_dataset(f"{i}/W", data=W)
                    g.create_dataset(f"{i}/b", data=b)

                if self.normalizer is not None:
                    g = f.create_group("normalizer")
                    g.create_dataset("minimum", data=self.normalizer.minimum)
                    g.create_dataset("maximum", data=self.normalizer.maximum)

    @classmethod
    def read(cls, filename):
        if not os.path.exists(filename):
            msg = f"Checkpoint file {filename} does not exist"
            raise FileNotFoundError(msg)

        with h5py.File(filename, "r") as f:
            version = int(f.attrs.get("format_version", -1))
            if version != CHECKPOINT_VERSION:
                msg = (
                    f"Unsupported checkpoint format version {version} in {filename} "
                    f"(expected {CHECKPOINT_VERSION})"
                )
                raise DataError(msg)

            arch = MlpArchitecture(
                input_dim=int(f.attrs["input_dim"]),
                output_dim=int(f.attrs["output_dim"]),
                hidden_dims=tuple(int(h) for h in f.attrs["hidden_dims"]),
            )
            layers = [
                (f[f"layers/{i}/W"][()], f[f"layers/{i}/b"][()])
                for i in range(len(arch.dims) - 1)
            ]
            seed = int(f.attrs["rng_seed"]) if "rng_seed" in f.attrs else None

            normalizer = None
            if "normalizer" in f:
                normalizer = Normalizer(
                    f["normalizer/minimum"][()], f["normalizer/maximum"][()]
                )

            meta = yaml.safe_load(f.attrs["meta"]) or {}

        return cls(MlpModel(arch, layers, rng_seed=seed), normalizer=normalizer, meta=meta)

    def __repr__(self):
        return f"<Checkpoint: {self.model!r}>"
