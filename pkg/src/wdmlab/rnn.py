"""Multi-channel bidirectional vanilla RNN equalizer.

Words of ``L`` consecutive symbols from ``m`` channels x ``n_pol``
polarizations are fed through a forward and a backward ``tanh`` recurrence
(``H`` units each, each with its own bias). At every time step the concatenated
``2H`` state drives one linear regression head per output lane, giving the I
and Q of that lane. Training is many-to-many with an MSE loss and Adam.

Feature layout (inputs and outputs): lanes ordered by channel (ascending
frequency), then polarization (x before y); each lane contributes its I
then its Q, so feature ``2*i`` is the in-phase part of lane ``i``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .sigkit import make_rng

CHECKPOINT_VERSION = 1
PARAM_ORDER = ("U_f", "W_f", "b_f", "U_b", "W_b", "b_b", "V", "c")


class AlignmentError(ValueError):
    """Input lanes are not the same length."""


class DivergenceError(FloatingPointError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class WindowSpec:
    length: int = 51
    edge_discard: int = 5

    def __post_init__(self):
        if self.length % 2 == 0:
            raise ValueError("window length must be odd")
        if self.length - 2 * self.edge_discard < 1:
            raise ValueError("edge_discard leaves no central symbols")

    @property
    def half(self) -> int:
        return self.length // 2

    @property
    def effective(self) -> int:
        return self.length - 2 * self.edge_discard


@dataclass(frozen=True)
class FeatureLayout:
    m: int
    n_pol: int = 2

    @property
    def lanes(self) -> int:
        return self.m * self.n_pol

    @property
    def features(self) -> int:
        return 2 * self.lanes


@dataclass
class WordSet:
    """Windowed dataset: ``x`` is (N, L, F), ``y`` is (N, L, y) or None."""

    x: np.ndarray
    y: np.ndarray | None
    starts: np.ndarray
    spec: WindowSpec
    n_symbols: int

    def __len__(self):
        return self.x.shape[0]

    @property
    def centers(self) -> np.ndarray:
        """Stream index of every retained (central) output, in output order."""
        e, le = self.spec.edge_discard, self.spec.effective
        return (self.starts[:, None] + e + np.arange(le)[None, :]).ravel()

    def subset(self, idx):
        return WordSet(self.x[idx], None if self.y is None else self.y[idx],
                       self.starts[idx], self.spec, self.n_symbols)


def split_iq(lanes) -> np.ndarray:
    """Complex ``(lanes, n)`` -> real ``(n, 2*lanes)`` with I/Q interleaved."""
    z = np.atleast_2d(np.asarray(lanes))
    out = np.empty((z.shape[1], 2 * z.shape[0]))
    out[:, 0::2] = z.real.T
    out[:, 1::2] = z.imag.T
    return out


def merge_iq(features) -> np.ndarray:
    """Inverse of :func:`split_iq` on the last axis: ``(..., 2*lanes)`` -> ``(lanes, ...)``."""
    f = np.asarray(features)
    z = f[..., 0::2] + 1j * f[..., 1::2]
    return np.moveaxis(z, -1, 0)


def make_windows(lanes, spec: WindowSpec, targets=None, stride=None) -> WordSet:
    """Tile the streams into words whose central symbols do not overlap.

    Word ``j`` starts at ``j * L_eff`` and owns the central symbols
    ``[j*L_eff + e, (j+1)*L_eff + e)``. Symbols too close to the stream ends
    to be centered are dropped.

    A ``stride`` smaller than ``L_eff`` gives overlapping words, which is
    only meant for building larger training sets; ``centers`` then repeats
    symbols.
    """
    if not isinstance(lanes, np.ndarray):
        if len({len(l) for l in lanes}) > 1:
            raise AlignmentError("input lanes differ in length")
    lanes = np.atleast_2d(np.asarray(lanes))
    n = lanes.shape[1]
    if targets is not None:
        targets = np.atleast_2d(targets)
        if targets.shape[1] != n:
            raise AlignmentError("targets and inputs differ in length")
    L = spec.length
    step = spec.effective if stride is None else int(stride)
    if step < 1:
        raise ValueError("stride must be positive")
    n_words = (n - L) // step + 1 if n >= L else 0
    starts = np.arange(n_words) * step
    idx = starts[:, None] + np.arange(L)[None, :]
    xf = split_iq(lanes)
    x = xf[idx]
    y = split_iq(targets)[idx] if targets is not None else None
    return WordSet(x, y, starts, spec, n)


def _glorot(rng, fan_out, fan_in):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_out, fan_in))


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


@dataclass
class BiVrnnModel:
    """Parameters and dimensions of the bidirectional vanilla RNN.

    ``V`` (y x 2H) and ``c`` (y) stack the ``y/2`` regression heads; rows
    ``2i`` and ``2i+1`` form the head of output lane ``i``.
    """

    H: int
    F: int
    y: int
    L: int
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, H, F, y, L, seed=0):
        if y % 2 or F % 2:
            raise ValueError("F and y must be even (I/Q pairs)")
        rng = make_rng(seed)
        p = {
            "U_f": _glorot(rng, H, F),
            "W_f": _orthogonal(rng, H),
            "b_f": np.zeros(H),
            "U_b": _glorot(rng, H, F),
            "W_b": _orthogonal(rng, H),
            "b_b": np.zeros(H),
            "V": np.vstack([_glorot(rng, 2, 2 * H) for _ in range(y // 2)]),
            "c": np.zeros(y),
        }
        return cls(H, F, y, L, p)

    @classmethod
    def zeros(cls, H, F, y, L):
        return cls(H, F, y, L, {
            "U_f": np.zeros((H, F)), "W_f": np.zeros((H, H)), "b_f": np.zeros(H),
            "U_b": np.zeros((H, F)), "W_b": np.zeros((H, H)), "b_b": np.zeros(H),
            "V": np.zeros((y, 2 * H)), "c": np.zeros(y),
        })

    @property
    def n_heads(self) -> int:
        return self.y // 2

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def copy(self) -> "BiVrnnModel":
        return BiVrnnModel(self.H, self.F, self.y, self.L, copy.deepcopy(self.params))


def _run(model: BiVrnnModel, x: np.ndarray):
    """Forward pass on a batch ``x`` (B, T, F); returns outputs and the cache."""
    p = model.params
    B, T, _ = x.shape
    H = model.H
    xu_f = x @ p["U_f"].T + p["b_f"]
    xu_b = x @ p["U_b"].T + p["b_b"]
    hf = np.empty((B, T, H))
    hb = np.empty((B, T, H))
    h = np.zeros((B, H))
    wf_t = p["W_f"].T
    for t in range(T):
        h = np.tanh(xu_f[:, t] + h @ wf_t)
        hf[:, t] = h
    h = np.zeros((B, H))
    wb_t = p["W_b"].T
    for t in range(T - 1, -1, -1):
        h = np.tanh(xu_b[:, t] + h @ wb_t)
        hb[:, t] = h
    z = np.concatenate([hf, hb], axis=-1)
    out = z @ p["V"].T + p["c"]
    return out, (x, hf, hb, z)


def forward(model: BiVrnnModel, words) -> np.ndarray:
    """Outputs for one word (T, F) or a batch (B, T, F)."""
    x = np.asarray(words, dtype=float)
    single = x.ndim == 2
    out, _ = _run(model, x[None] if single else x)
    return out[0] if single else out


def mse_loss(pred, target) -> float:
    if np.shape(pred) != np.shape(target):
        raise ValueError("prediction and target shapes differ")
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(d * d))


def bptt_gradients(model: BiVrnnModel, words, targets):
    """MSE loss and its exact gradient for every parameter.

    ``words``/``targets`` are a single word (T, F)/(T, y) or a batch; the loss
    is the mean over every output entry of the batch.
    """
    x = np.asarray(words, dtype=float)
    t = np.asarray(targets, dtype=float)
    if x.ndim == 2:
        x, t = x[None], t[None]
    p = model.params
    H = model.H
    out, (x, hf, hb, z) = _run(model, x)
    diff = out - t
    loss = float(np.mean(diff * diff))
    dout = 2.0 * diff / diff.size
    grads = {
        "V": np.einsum("bty,bth->yh", dout, z),
        "c": dout.sum(axis=(0, 1)),
    }
    dz = dout @ p["V"]
    dhf, dhb = dz[..., :H], dz[..., H:]
    B, T, _ = x.shape

    # forward direction: state t depends on t-1
    da_f = np.empty_like(hf)
    carry = np.zeros((B, H))
    for s in range(T - 1, -1, -1):
        da = (dhf[:, s] + carry) * (1.0 - hf[:, s] ** 2)
        da_f[:, s] = da
        carry = da @ p["W_f"]
    prev_f = np.concatenate([np.zeros((B, 1, H)), hf[:, :-1]], axis=1)
    grads["U_f"] = np.einsum("bth,btf->hf", da_f, x)
    grads["W_f"] = np.einsum("bth,btk->hk", da_f, prev_f)
    grads["b_f"] = da_f.sum(axis=(0, 1))

    # backward direction: state t depends on t+1
    da_b = np.empty_like(hb)
    carry = np.zeros((B, H))
    for s in range(T):
        da = (dhb[:, s] + carry) * (1.0 - hb[:, s] ** 2)
        da_b[:, s] = da
        carry = da @ p["W_b"]
    prev_b = np.concatenate([hb[:, 1:], np.zeros((B, 1, H))], axis=1)
    grads["U_b"] = np.einsum("bth,btf->hf", da_b, x)
    grads["W_b"] = np.einsum("bth,btk->hk", da_b, prev_b)
    grads["b_b"] = da_b.sum(axis=(0, 1))
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    batch_words: int = 512
    epochs: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clip: float | None = None

    def __post_init__(self):
        if self.batch_words < 1 or self.epochs < 1:
            raise ValueError("batch_words and epochs must be positive")


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k in PARAM_ORDER:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = -1


def evaluate_mse(model, data: WordSet, chunk=4096) -> float:
    total, count = 0.0, 0
    for s in range(0, len(data), chunk):
        out = forward(model, data.x[s:s + chunk])
        d = out - data.y[s:s + chunk]
        total += float(np.sum(d * d))
        count += d.size
    return total / count


def train(model: BiVrnnModel, data: WordSet, cfg: TrainConfig, val: WordSet | None = None):
    """Minibatch Adam on the MSE loss.

    The train (and validation) MSE over the full set is recorded after every
    epoch. Returns the parameters with the lowest validation MSE (train MSE
    when no validation set is given) and the history.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    work = model.copy()
    opt = Adam(work.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = make_rng(cfg.seed)
    hist = TrainHistory()
    best, best_score = work.copy(), np.inf
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b, s in enumerate(range(0, n, cfg.batch_words)):
            idx = order[s:s + cfg.batch_words]
            loss, grads = bptt_gradients(work, data.x[idx], data.y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b)
            if cfg.clip is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > cfg.clip:
                    grads = {k: g * (cfg.clip / norm) for k, g in grads.items()}
            opt.step(work.params, grads)
        tr = evaluate_mse(work, data)
        if not np.isfinite(tr):
            raise DivergenceError(epoch, -1)
        hist.train_mse.append(tr)
        score = tr
        if val is not None and len(val):
            score = evaluate_mse(work, val)
            hist.val_mse.append(score)
        if score < best_score:
            best_score, hist.best_epoch = score, epoch
            best = work.copy()
    return best, hist


def infer_symbols(model: BiVrnnModel, data: WordSet, central_only=True):
    """Many-to-many inference rebuilt into complex lanes.

    With ``central_only`` each word contributes its ``L_eff`` central outputs
    and the result is ``(lanes, N*L_eff)`` aligned with ``data.centers``.
    Otherwise all ``L`` outputs of every word are returned, aligned with
    ``data.starts[:, None] + arange(L)`` flattened.
    """
    out = forward(model, data.x) if len(data) else np.zeros((0, data.spec.length, model.y))
    if central_only:
        e = data.spec.edge_discard
        out = out[:, e:e + data.spec.effective]
    return merge_iq(out.reshape(-1, model.y))


def all_positions(data: WordSet) -> np.ndarray:
    return (data.starts[:, None] + np.arange(data.spec.length)[None, :]).ravel()


def save_model(path, model: BiVrnnModel, manifest: dict | None = None):
    """Write a checkpoint (``.npz``).

    Keys: ``format_version`` (int), ``dims`` = [H, F, y, L], the parameter
    blocks ``U_f, W_f, b_f, U_b, W_b, b_b, V, c`` and ``manifest`` (JSON text).
    """
    np.savez(
        path,
        format_version=np.array(CHECKPOINT_VERSION),
        dims=np.array([model.H, model.F, model.y, model.L]),
        manifest=np.array(json.dumps(manifest or {}, sort_keys=True, default=_jsonable)),
        **{k: model.params[k] for k in PARAM_ORDER},
    )


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        H, F, y, L = (int(v) for v in z["dims"])
        params = {k: np.array(z[k]) for k in PARAM_ORDER}
        manifest = json.loads(str(z["manifest"]))
    return BiVrnnModel(H, F, y, L, params), manifest


def _jsonable(o):
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
