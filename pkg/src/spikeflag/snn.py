"""Feed-forward first-order LIF networks trained by surrogate-gradient BPTT.

Everything is plain numpy. Arrays inside the simulator are laid out
``[batch, step, neuron]``; public ``SpikeTrain`` objects are ``[neuron, step]``.

Per layer and step::

    u_pre[t] = beta * u[t-1] + W @ s_in[t]
    s[t]     = H(u_pre[t] - v_threshold)
    u[t]     = u_pre[t] - s[t] * v_threshold        (subtract reset)
             = u_pre[t] * (1 - s[t])                 (zero reset)

The backward pass unrolls the same graph and replaces ``dH/du`` with a
surrogate derivative. In ``smooth`` mode the forward pass also uses the
surrogate's primitive in place of ``H``, which makes the whole graph
differentiable and lets finite differences check the gradients exactly.
By default the reset term is detached (treated as a constant) in the
backward pass; set ``SurrogateConfig.detach_reset=False`` to differentiate
through it as well.
"""
from __future__ import annotations

import copy
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoding import SpikeTrain, latency_encode
from .errors import ConfigError, FormatError, ShapeError

HIDDEN = 512

# (model_type, polarisation) -> (channels_in, channels_out)
ARCHITECTURES = {
    ("patched", "dop"): (16, 16),
    ("patched", "full"): (64, 16),
    ("xylo", "dop"): (15, 15),
    ("xylo", "full"): (4, 4),
    ("full", "dop"): (512, 512),
    ("full", "full"): (2048, 512),
}

XYLO_LIMITS = {"channels_in": 16, "hidden": 1000, "channels_out": 16}


@dataclass(frozen=True)
class LifParams:
    beta: float = 0.9
    v_threshold: float = 1.0
    reset: str = "subtract"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        if self.v_threshold <= 0:
            raise ConfigError(f"v_threshold must be > 0, got {self.v_threshold}")
        if self.reset not in ("subtract", "zero"):
            raise ConfigError(f"reset must be 'subtract' or 'zero', got {self.reset!r}")


@dataclass(frozen=True)
class SurrogateConfig:
    kind: str = "fast-sigmoid"
    slope: float = 25.0
    # drop the reset term's dependence on the spike from the backward graph
    detach_reset: bool = True

    def __post_init__(self):
        if self.kind not in ("fast-sigmoid", "arctan"):
            raise ConfigError(f"unknown surrogate {self.kind!r}")
        if self.slope <= 0:
            raise ConfigError("surrogate slope must be > 0")

    def derivative(self, x):
        k = self.slope
        if self.kind == "fast-sigmoid":
            return k / (1.0 + k * np.abs(x)) ** 2
        return (k / 2) / (1.0 + (np.pi / 2 * k * x) ** 2)

    def primitive(self, x):
        """Smooth step whose derivative is exactly ``derivative``."""
        k = self.slope
        if self.kind == "fast-sigmoid":
            return 0.5 + k * x / (1.0 + k * np.abs(x))
        return 0.5 + np.arctan(np.pi / 2 * k * x) / np.pi


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    trials: int = 10
    betas: tuple[float, float] = (0.9, 0.999)
    workers: int = 1

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("batch_size", "learning_rate", "trials", "workers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class EncodingConfig:
    exposure_steps: int = 4
    latency_curve: str = "linear"
    decode_threshold: float = 0.5
    zero_spikes: bool = True
    # "window": membranes restart from zero for every encoded time sample;
    # "patch": state carries across the time samples of a patch
    state_reset: str = "window"

    def __post_init__(self):
        if self.exposure_steps < 2:
            raise ConfigError("exposure_steps must be >= 2")
        if self.state_reset not in ("window", "patch"):
            raise ConfigError(f"state_reset must be 'window' or 'patch', got {self.state_reset!r}")
        if not 0.0 < self.decode_threshold <= 1.0:
            raise ConfigError("decode_threshold must lie in (0, 1]")


@dataclass
class LifNetwork:
    weights: list[np.ndarray]
    params: list[LifParams] = field(default_factory=list)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        if not self.weights:
            raise ShapeError("a network needs at least one layer")
        if not self.params:
            self.params = [LifParams()] * len(self.weights)
        if len(self.params) != len(self.weights):
            raise ShapeError("one LifParams per layer required")
        for k, w in enumerate(self.weights):
            if w.ndim != 2:
                raise ShapeError(f"layer {k} weights must be a matrix")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k} expects {w.shape[1]} inputs but layer {k - 1} has {self.weights[k - 1].shape[0]} neurons"
                )
            if not np.all(np.isfinite(w)):
                raise ShapeError(f"layer {k} weights are not finite")

    @classmethod
    def init(cls, sizes: Sequence[int], seed: int = 0, params: LifParams | Sequence[LifParams] = LifParams()):
        """Uniform ``+-sqrt(1/fan_in)`` initialisation for layer sizes ``(in, h1, ..., out)``."""
        rng = np.random.default_rng(seed)
        weights = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(1.0 / n_in)
            weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        if isinstance(params, LifParams):
            params = [params] * len(weights)
        return cls(weights, list(params))

    @property
    def architecture(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def channels_in(self) -> int:
        return self.architecture[0]

    @property
    def channels_out(self) -> int:
        return self.architecture[-1]

    def copy(self) -> "LifNetwork":
        return copy.deepcopy(self)


def build_from_config(model_type: str, polarisation: str, hidden: int = HIDDEN, seed: int = 0,
                      params: LifParams = LifParams()) -> LifNetwork:
    key = (model_type, polarisation)
    if key not in ARCHITECTURES:
        raise ConfigError(f"unknown model configuration {key}; choose from {sorted(ARCHITECTURES)}")
    c_in, c_out = ARCHITECTURES[key]
    return LifNetwork.init((c_in, hidden, c_out), seed=seed, params=params)


def xylo_check(net: LifNetwork) -> list[str]:
    """Violations of the Xylo input/hidden/output limits; empty when it fits."""
    arch = net.architecture
    hidden = sum(arch[1:-1])
    out = []
    if arch[0] > XYLO_LIMITS["channels_in"]:
        out.append(f"{arch[0]} input channels > {XYLO_LIMITS['channels_in']}")
    if hidden > XYLO_LIMITS["hidden"]:
        out.append(f"{hidden} hidden neurons > {XYLO_LIMITS['hidden']}")
    if arch[-1] > XYLO_LIMITS["channels_out"]:
        out.append(f"{arch[-1]} output channels > {XYLO_LIMITS['channels_out']}")
    return out


def lif_step(u, i, p: LifParams):
    """One membrane update; returns ``(u_next, spikes)``."""
    u_pre = p.beta * np.asarray(u, dtype=float) + np.asarray(i, dtype=float)
    s = u_pre >= p.v_threshold
    if p.reset == "subtract":
        u_next = u_pre - s * p.v_threshold
    else:
        u_next = u_pre * (1 - s)
    return u_next, s


# --------------------------------------------------------------------------
# simulation and BPTT
# --------------------------------------------------------------------------

def _simulate(net: LifNetwork, x: np.ndarray, surrogate: SurrogateConfig | None = None):
    """Run ``x`` (``[N, S, C_in]``) through the network.

    Returns per-layer spike arrays (index 0 is the input) and pre-reset
    membrane potentials. ``surrogate`` switches on the smooth forward pass.
    """
    if x.shape[-1] != net.channels_in:
        raise ShapeError(f"input has {x.shape[-1]} channels, network expects {net.channels_in}")
    N, S, _ = x.shape
    spikes = [x.astype(float)]
    u_pres = []
    for W, p in zip(net.weights, net.params):
        cur = spikes[-1] @ W.T
        n = W.shape[0]
        u = np.zeros((N, n))
        s_all = np.empty((N, S, n))
        up_all = np.empty((N, S, n))
        thr = p.v_threshold
        for t in range(S):
            up = p.beta * u + cur[:, t]
            if surrogate is None:
                s = (up >= thr).astype(float)
            else:
                s = surrogate.primitive(up - thr)
            u = up - s * thr if p.reset == "subtract" else up * (1.0 - s)
            s_all[:, t] = s
            up_all[:, t] = up
        spikes.append(s_all)
        u_pres.append(up_all)
    return spikes, u_pres


def _backward(net: LifNetwork, spikes, u_pres, grad_out, surrogate: SurrogateConfig):
    grads = [None] * len(net.weights)
    gs = grad_out
    for l in reversed(range(len(net.weights))):
        W, p = net.weights[l], net.params[l]
        thr = p.v_threshold
        up, s = u_pres[l], spikes[l + 1]
        d = surrogate.derivative(up - thr)
        g_up = np.empty_like(up)
        gu = np.zeros((up.shape[0], up.shape[2]))
        for t in reversed(range(up.shape[1])):
            if surrogate.detach_reset:
                g = gu if p.reset == "subtract" else gu * (1.0 - s[:, t])
                g = g + gs[:, t] * d[:, t]
            elif p.reset == "subtract":
                g = gu + (gs[:, t] - thr * gu) * d[:, t]
            else:
                g = gu * (1.0 - s[:, t]) + (gs[:, t] - up[:, t] * gu) * d[:, t]
            g_up[:, t] = g
            gu = p.beta * g
        grads[l] = np.einsum("nso,nsi->oi", g_up, spikes[l])
        if l:
            gs = g_up @ W
    return grads


def _window_counts(s: np.ndarray, exposure: int) -> np.ndarray:
    N, S, C = s.shape
    return s.reshape(N, S // exposure, exposure, C).sum(2)


def _loss(counts, target_counts, exposure):
    return float(np.mean(((counts - target_counts) / exposure) ** 2))


def _loss_and_grads(net, x, target_counts, exposure, surrogate, smooth=False, normaliser=None):
    spikes, u_pres = _simulate(net, x, surrogate if smooth else None)
    counts = _window_counts(spikes[-1], exposure)
    diff = (counts - target_counts) / exposure
    norm = diff.size if normaliser is None else normaliser
    loss_sum = float(np.sum(diff**2))
    g_counts = 2.0 * diff / exposure / norm
    g_out = np.repeat(g_counts, exposure, axis=1)
    return loss_sum / norm, _backward(net, spikes, u_pres, g_out, surrogate)


def batch_gradients(net, x, target_counts, exposure, surrogate, workers: int = 1, smooth=False):
    """Mean loss and weight gradients over a batch, optionally split across threads.

    Each worker handles a contiguous chunk and returns gradients scaled by
    the full batch size, so the result is a plain sum of partials.
    """
    norm = target_counts.size
    chunks = np.array_split(np.arange(len(x)), min(workers, len(x)))

    def part(idx):
        return _loss_and_grads(net, x[idx], target_counts[idx], exposure, surrogate, smooth, norm)

    if len(chunks) == 1:
        results = [part(chunks[0])]
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            results = list(pool.map(part, chunks))
    loss = sum(r[0] for r in results)
    grads = [sum(r[1][k] for r in results) for k in range(len(net.weights))]
    return loss, grads


def forward(net: LifNetwork, inp: SpikeTrain):
    """Simulate one spike train; returns ``(output SpikeTrain, per-layer rates)``.

    ``rates[0]`` is the input spike rate and ``rates[l]`` the rate of layer
    ``l``: total spikes over ``neurons * steps``.
    """
    if inp.spikes.shape[0] != net.channels_in:
        raise ShapeError(f"input has {inp.spikes.shape[0]} channels, network expects {net.channels_in}")
    spikes, _ = _simulate(net, inp.spikes.T[None].astype(float))
    rates = [float(s.mean()) for s in spikes]
    return SpikeTrain(spikes[-1][0].T.astype(bool), inp.exposure), rates


def loss_h(output: SpikeTrain, target: SpikeTrain) -> float:
    """Mean squared difference of per-window spike counts, in units of the exposure."""
    if output.spikes.shape != target.spikes.shape or output.exposure != target.exposure:
        raise ShapeError(f"output {output.spikes.shape} and target {target.spikes.shape} differ")
    return _loss(output.counts(), target.counts(), output.exposure)


def backward_bptt(net: LifNetwork, inp: SpikeTrain, target: SpikeTrain,
                  surrogate: SurrogateConfig = SurrogateConfig(), smooth: bool = False):
    """Gradients of ``loss_h`` w.r.t. every weight matrix.

    With ``smooth=True`` the forward pass is the surrogate-smoothed one and
    the gradients are exact for it.
    """
    if target.spikes.shape[0] != net.channels_out:
        raise ShapeError("target channels do not match the network output")
    x = inp.spikes.T[None].astype(float)
    tc = target.counts().T[None].astype(float)
    _, grads = _loss_and_grads(net, x, tc, inp.exposure, surrogate, smooth)
    return grads


def smooth_loss(net: LifNetwork, inp: SpikeTrain, target: SpikeTrain, surrogate: SurrogateConfig) -> float:
    """``loss_h`` evaluated on the surrogate-smoothed forward pass."""
    spikes, _ = _simulate(net, inp.spikes.T[None].astype(float), surrogate)
    counts = _window_counts(spikes[-1], inp.exposure)
    return _loss(counts, target.counts().T[None], inp.exposure)


# --------------------------------------------------------------------------
# patches <-> tensors
# --------------------------------------------------------------------------

def target_rows(mask: np.ndarray, channels_out: int) -> np.ndarray:
    """Map a patch mask ``[patch_freq, T]`` onto ``channels_out`` output rows.

    When the output is a whole multiple of the patch height the mask is
    repeated (one copy per group, e.g. per polarisation).
    """
    mask = np.asarray(mask, dtype=bool)
    pf = mask.shape[0]
    if channels_out % pf:
        raise ShapeError(f"{channels_out} outputs cannot represent a {pf}-row mask")
    return np.tile(mask, (channels_out // pf, 1))


def group_rows(counts: np.ndarray, patch_freq: int) -> np.ndarray:
    """Inverse of ``target_rows`` for outputs: average repeated groups."""
    c = counts.shape[0]
    return counts.reshape(c // patch_freq, patch_freq, *counts.shape[1:]).mean(0)


def encode_patches(patches, channels_out: int, enc: EncodingConfig):
    """Stack patches into simulator inputs and target counts.

    Returns ``x`` of shape ``[N, T*e, C_in]`` and ``y`` of ``[N, T, C_out]``,
    or ``[N*T, e, C_in]`` / ``[N*T, 1, C_out]`` when state resets per window.
    """
    xs, ys = [], []
    for p in patches:
        xs.append(latency_encode(p.values, enc.exposure_steps, enc.zero_spikes, enc.latency_curve).spikes.T)
        if p.mask is not None:
            ys.append(target_rows(p.mask, channels_out).T * enc.exposure_steps)
    x = np.stack(xs).astype(float)
    y = np.stack(ys).astype(float) if ys else None
    if enc.state_reset == "window":
        x = x.reshape(-1, enc.exposure_steps, x.shape[-1])
        if y is not None:
            y = y.reshape(-1, 1, y.shape[-1])
    return x, y


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

class Adam:
    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(net: LifNetwork, split, cfg: TrainConfig, surrogate: SurrogateConfig = SurrogateConfig(),
          encoding: EncodingConfig = EncodingConfig()):
    """Fit ``net`` to the training patches of ``split``.

    Returns a trained copy and the per-epoch mean training loss.
    """
    net = net.copy()
    if cfg.epochs == 0:
        return net, []
    patches = split.train
    if not patches:
        raise ConfigError("no training patches")
    if patches[0].channels_in != net.channels_in:
        raise ShapeError(f"patches have {patches[0].channels_in} channels, network expects {net.channels_in}")
    x, y = encode_patches(patches, net.channels_out, encoding)
    if y is None:
        raise ConfigError("training patches carry no masks")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.learning_rate, cfg.betas)
    history = []
    n = len(x)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = batch_gradients(net, x[idx], y[idx], encoding.exposure_steps, surrogate, cfg.workers)
            opt.step(net.weights, grads)
            total += loss * len(idx)
        history.append(total / n)
    return net, history


def predict_counts(net: LifNetwork, patches, encoding: EncodingConfig = EncodingConfig()):
    """Output spike counts per patch, ``[N, C_out, T]``, plus per-layer rates per patch."""
    x, _ = encode_patches(patches, net.channels_out, encoding)
    spikes, _ = _simulate(net, x)
    n = len(patches)
    counts = _window_counts(spikes[-1], encoding.exposure_steps).reshape(n, -1, net.channels_out)
    rates = np.stack([s.reshape(n, -1).mean(axis=1) for s in spikes], axis=1)
    return counts.transpose(0, 2, 1), rates


def measure_spike_rates(net: LifNetwork, test_patches, encoding: EncodingConfig = EncodingConfig()) -> list[float]:
    """Per-layer spike rate averaged over patches (index 0 is the input)."""
    if not test_patches:
        raise ConfigError("cannot measure spike rates on an empty test set")
    _, rates = predict_counts(net, test_patches, encoding)
    return [float(r) for r in rates.mean(0)]


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

MAGIC = b"SPKFLAG1"


def save_checkpoint(path, net: LifNetwork, metadata: dict | None = None):
    """Write ``net`` as: magic, uint32 header length, JSON header, float32 LE weights."""
    header = {
        "format_version": 1,
        "architecture": list(net.architecture),
        "layers": [
            {"shape": list(w.shape), **asdict(p)} for w, p in zip(net.weights, net.params)
        ],
        "dtype": "<f4",
        "order": "C",
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w in net.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[LifNetwork, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a spikeflag checkpoint")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    off = 12 + hlen
    weights, params = [], []
    for layer in header["layers"]:
        shape = tuple(layer["shape"])
        n = shape[0] * shape[1]
        w = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        weights.append(w.astype(float))
        params.append(LifParams(layer["beta"], layer["v_threshold"], layer["reset"]))
    if off != len(raw):
        raise FormatError(f"{path}: trailing or missing weight bytes")
    return LifNetwork(weights, params), header.get("metadata", {})
