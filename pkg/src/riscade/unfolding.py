"""Deep unfolding network: layered gradient steps with learned affine maps.

Each layer combines the running iterate h with the fixed Gram matrix G and
the per-sample compressed statistic c as

    t = h + delta1 * G h + delta2 * c + delta3 * h
    z = weight @ t + bias
    h = relu(z)        (identity on the last layer)

which at initialization reproduces one classic gradient-descent step. The
backward pass is derived by hand (no autodiff) for the normalized square
error loss, and training runs mini-batch Adam with the delta coefficients
clamped to their admissible intervals after every update. All math is double
precision in the lifted real domain.
"""

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ChecksumError, DivergenceError
from .estimators import spectral_norm
from .seeding import derive_seed
from .sounding import lift_vector, unlift_vector
from .validation import as_complex_batch, check_positive_int, check_positive_real

CHECKPOINT_MAGIC = b"RISU"
CHECKPOINT_VERSION = 1


@dataclass
class LayerParams:
    """One layer's learnables: three step coefficients plus an affine map.

    delta1 and delta3 live in [-1, 0], delta2 in [0, 1]; the optimizer
    projects back onto these intervals after every update.
    """

    delta1: float
    delta2: float
    delta3: float
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class UnfoldingParams:
    """The full stack of layers, all sharing one lifted dimension."""

    layers: list

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def dim(self):
        return self.layers[0].bias.shape[0]

    def copy(self):
        return UnfoldingParams(
            layers=[
                LayerParams(
                    delta1=lp.delta1,
                    delta2=lp.delta2,
                    delta3=lp.delta3,
                    weight=lp.weight.copy(),
                    bias=lp.bias.copy(),
                )
                for lp in self.layers
            ]
        )


@dataclass
class LayerGrads:
    """Per-layer gradient (or Adam moment) container mirroring LayerParams."""

    delta1: float
    delta2: float
    delta3: float
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class Gradients:
    layers: list


@dataclass
class _LayerCache:
    h_in: np.ndarray
    gh_in: np.ndarray
    t: np.ndarray
    z: np.ndarray


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by backward."""

    layers: list
    stats: np.ndarray
    output: np.ndarray
    use_activation: bool


@dataclass
class AdamState:
    """Adam accumulators, one moment pair per parameter."""

    learning_rate: float
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8


@dataclass(frozen=True)
class TrainSchedule:
    """Mini-batch protocol: the learning rate is halved once past halve_epoch."""

    n_epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    halve_epoch: int = 20

    def __post_init__(self):
        check_positive_int(self.n_epochs, "n_epochs")
        check_positive_int(self.batch_size, "batch_size")
        check_positive_real(self.learning_rate, "learning_rate")
        check_positive_int(self.halve_epoch, "halve_epoch")

    def rate_for_epoch(self, epoch):
        if epoch <= self.halve_epoch:
            return self.learning_rate
        return self.learning_rate / 2.0


@dataclass(frozen=True)
class TrainingSet:
    """Samples sharing one Gram matrix: per-sample statistics and targets."""

    gram: np.ndarray
    stats: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.stats.ndim != 2 or self.targets.shape != self.stats.shape:
            raise ValueError("stats and targets must be matching (n, dim) arrays")
        if self.gram.shape != (self.stats.shape[1],) * 2:
            raise ValueError("gram must be (dim, dim) for the given stats")

    def __len__(self):
        return self.stats.shape[0]


def init_params(n_bs, n_ris, n_layers, gram_real, rng=None):
    """Start the network at the classic gradient iteration it unfolds.

    Every layer gets delta1 = -beta0, delta2 = beta0 (beta0 from the Gram
    spectral norm), a slightly negative delta3, identity weight and zero
    bias. Deterministic; rng is accepted for interface symmetry only.
    """
    dim = 2 * n_bs * n_ris
    gram_real = np.asarray(gram_real, dtype=np.float64)
    if gram_real.shape != (dim, dim):
        raise ValueError(
            f"gram_real must be ({dim}, {dim}) for n_bs={n_bs}, n_ris={n_ris}"
        )
    check_positive_int(n_layers, "n_layers")
    beta0 = min(0.9 / spectral_norm(gram_real), 1.0)
    layers = [
        LayerParams(
            delta1=-beta0,
            delta2=beta0,
            delta3=-1e-3,
            weight=np.eye(dim),
            bias=np.zeros(dim),
        )
        for _ in range(n_layers)
    ]
    return UnfoldingParams(layers=layers)


def _as_batch_real(x, dim, name):
    x = np.asarray(x, dtype=np.float64)
    was_1d = x.ndim == 1
    if was_1d:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got shape {x.shape}")
    return x, was_1d


def forward(params, gram, stats, h0=None, use_activation=True, keep_cache=True):
    """Run the layer stack; returns (output, cache).

    stats (and h0, default zero) may be a single vector or an (n, dim)
    batch. With keep_cache=False the intermediates are not retained and the
    cache slot is None, which keeps large-batch inference memory flat.
    """
    dim = params.dim
    c, was_1d = _as_batch_real(stats, dim, "stats")
    if h0 is None:
        h = np.zeros_like(c)
    else:
        h, _ = _as_batch_real(h0, dim, "h0")
        if h.shape[0] == 1 and c.shape[0] > 1:
            h = np.broadcast_to(h, c.shape).copy()
        elif h.shape[0] != c.shape[0]:
            raise ValueError("h0 batch size must match stats")
        else:
            h = h.copy()
    n_layers = params.n_layers
    layer_caches = [] if keep_cache else None
    for i, lp in enumerate(params.layers):
        gh = h @ gram.T
        t = h + lp.delta1 * gh + lp.delta2 * c + lp.delta3 * h
        z = t @ lp.weight.T + lp.bias
        if use_activation and i < n_layers - 1:
            out = np.maximum(z, 0.0)
        else:
            out = z
        if keep_cache:
            layer_caches.append(_LayerCache(h_in=h, gh_in=gh, t=t, z=z))
        h = out
    cache = None
    if keep_cache:
        cache = ForwardCache(
            layers=layer_caches, stats=c, output=h, use_activation=use_activation
        )
    return (h[0] if was_1d else h), cache


def nmse_loss(h_hat, h_true):
    """Squared error normalized by the true energy, averaged over the batch."""
    h_hat = np.atleast_2d(np.asarray(h_hat, dtype=np.float64))
    h_true = np.atleast_2d(np.asarray(h_true, dtype=np.float64))
    if h_hat.shape != h_true.shape:
        raise ValueError(
            f"shape mismatch: {h_hat.shape} versus {h_true.shape}"
        )
    norms = np.sum(h_true * h_true, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("ground-truth vectors must have non-zero norm")
    err = h_hat - h_true
    return float(np.mean(np.sum(err * err, axis=1) / norms))


def backward(params, cache, gram, stats, h_true):
    """Exact loss gradients for every layer parameter, from a forward cache.

    Seeds with the derivative of the batch-mean normalized square error and
    walks the stack in reverse: through the activation via the positive-part
    indicator, through the affine map, then through the combination step to
    the three coefficients and the previous iterate.
    """
    if cache is None or len(cache.layers) != params.n_layers:
        raise ValueError("cache does not match the parameter stack")
    dim = params.dim
    c, _ = _as_batch_real(stats, dim, "stats")
    h_true, _ = _as_batch_real(h_true, dim, "h_true")
    if cache.output.shape != h_true.shape or cache.stats.shape != c.shape:
        raise ValueError("cache shapes do not match stats/h_true")
    batch = h_true.shape[0]
    norms = np.sum(h_true * h_true, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("ground-truth vectors must have non-zero norm")
    g_h = 2.0 * (cache.output - h_true) / (batch * norms[:, np.newaxis])
    n_layers = params.n_layers
    grads = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        lp = params.layers[i]
        lc = cache.layers[i]
        if cache.use_activation and i < n_layers - 1:
            g_z = g_h * (lc.z > 0.0)
        else:
            g_z = g_h
        g_weight = g_z.T @ lc.t
        g_bias = g_z.sum(axis=0)
        g_t = g_z @ lp.weight
        grads[i] = LayerGrads(
            delta1=float(np.sum(g_t * lc.gh_in)),
            delta2=float(np.sum(g_t * c)),
            delta3=float(np.sum(g_t * lc.h_in)),
            weight=g_weight,
            bias=g_bias,
        )
        if i > 0:
            g_h = g_t + lp.delta1 * (g_t @ gram) + lp.delta3 * g_t
    return Gradients(layers=grads)


def init_adam(params, learning_rate):
    zeros = [
        LayerGrads(
            delta1=0.0,
            delta2=0.0,
            delta3=0.0,
            weight=np.zeros_like(lp.weight),
            bias=np.zeros_like(lp.bias),
        )
        for lp in params.layers
    ]
    mirror = [
        LayerGrads(
            delta1=0.0,
            delta2=0.0,
            delta3=0.0,
            weight=np.zeros_like(lp.weight),
            bias=np.zeros_like(lp.bias),
        )
        for lp in params.layers
    ]
    return AdamState(learning_rate=learning_rate, m=zeros, v=mirror)


def _adam_scalar(value, grad, m, v, state, bc1, bc2):
    m_new = state.beta1 * m + (1.0 - state.beta1) * grad
    v_new = state.beta2 * v + (1.0 - state.beta2) * grad * grad
    step = state.learning_rate * (m_new / bc1) / (np.sqrt(v_new / bc2) + state.eps_adam)
    return value - step, m_new, v_new


def adam_step(params, grads, state):
    """One Adam update with bias correction, then project the deltas.

    delta1 and delta3 are clamped to [-1, 0], delta2 to [0, 1]. Non-finite
    gradients are rejected before any parameter is touched.
    """
    for lg in grads.layers:
        finite = (
            np.isfinite(lg.delta1)
            and np.isfinite(lg.delta2)
            and np.isfinite(lg.delta3)
            and np.all(np.isfinite(lg.weight))
            and np.all(np.isfinite(lg.bias))
        )
        if not finite:
            raise DivergenceError("non-finite gradients passed to adam_step")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    lr = state.learning_rate
    for lp, lg, m, v in zip(params.layers, grads.layers, state.m, state.v):
        new1, m.delta1, v.delta1 = _adam_scalar(
            lp.delta1, lg.delta1, m.delta1, v.delta1, state, bc1, bc2
        )
        new2, m.delta2, v.delta2 = _adam_scalar(
            lp.delta2, lg.delta2, m.delta2, v.delta2, state, bc1, bc2
        )
        new3, m.delta3, v.delta3 = _adam_scalar(
            lp.delta3, lg.delta3, m.delta3, v.delta3, state, bc1, bc2
        )
        lp.delta1 = float(np.clip(new1, -1.0, 0.0))
        lp.delta2 = float(np.clip(new2, 0.0, 1.0))
        lp.delta3 = float(np.clip(new3, -1.0, 0.0))
        m.weight *= state.beta1
        m.weight += (1.0 - state.beta1) * lg.weight
        v.weight *= state.beta2
        v.weight += (1.0 - state.beta2) * np.square(lg.weight)
        lp.weight -= lr * (m.weight / bc1) / (np.sqrt(v.weight / bc2) + state.eps_adam)
        m.bias *= state.beta1
        m.bias += (1.0 - state.beta1) * lg.bias
        v.bias *= state.beta2
        v.bias += (1.0 - state.beta2) * np.square(lg.bias)
        lp.bias -= lr * (m.bias / bc1) / (np.sqrt(v.bias / bc2) + state.eps_adam)
    return params, state


def train(params, dataset, schedule=None, rng=None):
    """Mini-batch Adam on a TrainingSet; returns (params, epoch loss history).

    Batches are reshuffled every epoch from rng; the trailing short batch is
    kept, and the recorded per-epoch loss is the exact sample mean of the
    batch losses seen during that epoch.
    """
    schedule = schedule or TrainSchedule()
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset must contain at least one sample")
    state = init_adam(params, schedule.learning_rate)
    history = []
    for epoch in range(1, schedule.n_epochs + 1):
        state.learning_rate = schedule.rate_for_epoch(epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            c = dataset.stats[idx]
            target = dataset.targets[idx]
            out, cache = forward(params, dataset.gram, c)
            loss = nmse_loss(out, target)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training loss diverged in epoch {epoch}", iteration=epoch
                )
            grads = backward(params, cache, dataset.gram, c, target)
            adam_step(params, grads, state)
            loss_sum += loss * len(idx)
        history.append(loss_sum / n)
    return params, history


def _layer_payload(lp):
    parts = [struct.pack("<3d", lp.delta1, lp.delta2, lp.delta3)]
    parts.append(np.ascontiguousarray(lp.weight, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(lp.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def _payload_checksum(payload):
    words = np.frombuffer(payload, dtype="<u8")
    return int(words.sum(dtype=np.uint64))


def save_checkpoint(params, path):
    """Serialize the layer stack to the fixed binary checkpoint layout.

    Header: magic "RISU", format version, dim and layer count as u32; then
    per layer delta1/delta2/delta3, row-major weight and bias as f64, all
    little-endian; trailed by a wraparound u64 checksum over the f64 payload.
    """
    dim = params.dim
    payload = b"".join(_layer_payload(lp) for lp in params.layers)
    header = CHECKPOINT_MAGIC + struct.pack(
        "<III", CHECKPOINT_VERSION, dim, params.n_layers
    )
    trailer = struct.pack("<Q", _payload_checksum(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload + trailer)


def load_checkpoint(path):
    """Read a checkpoint back into UnfoldingParams, verifying the checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != CHECKPOINT_MAGIC:
        raise ChecksumError(f"{path}: not a checkpoint file")
    version, dim, n_layers = struct.unpack("<III", blob[4:16])
    if version != CHECKPOINT_VERSION:
        raise ChecksumError(f"{path}: unsupported checkpoint version {version}")
    per_layer = 8 * (3 + dim * dim + dim)
    expected = 16 + n_layers * per_layer + 8
    if len(blob) != expected:
        raise ChecksumError(
            f"{path}: truncated checkpoint ({len(blob)} bytes, expected {expected})"
        )
    payload = blob[16:-8]
    (stored,) = struct.unpack("<Q", blob[-8:])
    if _payload_checksum(payload) != stored:
        raise ChecksumError(f"{path}: checksum mismatch")
    layers = []
    offset = 0
    for _ in range(n_layers):
        d1, d2, d3 = struct.unpack_from("<3d", payload, offset)
        offset += 24
        weight = np.frombuffer(payload, dtype="<f8", count=dim * dim, offset=offset)
        offset += 8 * dim * dim
        bias = np.frombuffer(payload, dtype="<f8", count=dim, offset=offset)
        offset += 8 * dim
        layers.append(
            LayerParams(
                delta1=d1,
                delta2=d2,
                delta3=d3,
                weight=weight.reshape(dim, dim).copy(),
                bias=bias.copy(),
            )
        )
    return UnfoldingParams(layers=layers)


class DeepUnfoldingEstimator(BaseEstimator):
    """sklearn-style front end: fit on observation/channel pairs, predict channels.

    X is a batch of complex sounding observations, y the matching complex
    cascaded-channel vectors; both are lifted to the real domain internally.
    Training is fully determined by (model, hyperparameters, seed).
    """

    def __init__(
        self,
        model=None,
        n_layers=8,
        n_epochs=40,
        batch_size=64,
        learning_rate=1e-3,
        halve_epoch=20,
        seed=0,
    ):
        self.model = model
        self.n_layers = n_layers
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.halve_epoch = halve_epoch
        self.seed = seed

    def _schedule(self):
        return TrainSchedule(
            n_epochs=self.n_epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            halve_epoch=self.halve_epoch,
        )

    def _stats_from_obs(self, obs):
        return lift_vector(obs) @ self.model.psi_real

    def fit(self, X, y):
        if self.model is None:
            raise ValueError("a MeasurementModel is required")
        obs, _ = as_complex_batch(X, self.model.n_obs, "X")
        chans, _ = as_complex_batch(y, self.model.dim, "y")
        if obs.shape[0] != chans.shape[0]:
            raise ValueError("X and y must have the same number of samples")
        dataset = TrainingSet(
            gram=self.model.gram_real,
            stats=self._stats_from_obs(obs),
            targets=lift_vector(chans),
        )
        params = init_params(
            self.model.n_bs, self.model.n_ris, self.n_layers, self.model.gram_real
        )
        shuffle_rng = np.random.default_rng(derive_seed(self.seed, "shuffle"))
        self.params_, self.loss_history_ = train(
            params, dataset, self._schedule(), shuffle_rng
        )
        return self

    def predict(self, X, chunk_size=4096):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict")
        obs, was_1d = as_complex_batch(X, self.model.n_obs, "X")
        out = np.empty((obs.shape[0], self.model.dim), dtype=np.complex128)
        for start in range(0, obs.shape[0], chunk_size):
            chunk = obs[start : start + chunk_size]
            stats = self._stats_from_obs(chunk)
            lifted, _ = forward(
                self.params_, self.model.gram_real, stats, keep_cache=False
            )
            out[start : start + chunk_size] = unlift_vector(lifted)
        return out[0] if was_1d else out

    def save(self, path):
        if not hasattr(self, "params_"):
            raise NotFittedError("nothing to save before fit")
        save_checkpoint(self.params_, path)

    @classmethod
    def from_checkpoint(cls, model, path, **kwargs):
        params = load_checkpoint(path)
        if params.dim != model.dim_real:
            raise ValueError(
                f"checkpoint dimension {params.dim} does not match the "
                f"measurement model ({model.dim_real})"
            )
        est = cls(model=model, n_layers=params.n_layers, **kwargs)
        est.params_ = params
        est.loss_history_ = []
        return est
