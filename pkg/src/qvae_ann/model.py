"""Discrete VAE with a Boltzmann-machine prior, used as a learned hash function.

Forward pass for a standardized input ``x``::

    f      = relu(L2(relu(L1(x))))              encoder trunk
    zeta1  = head1(f)                           group-1 logits
    z1     = reparam_sample(zeta1, rho1)
    zeta2  = head2([f, z1])                     group-2 logits, conditioned on z1
    z2     = reparam_sample(zeta2, rho2)
    x_hat  = D2(relu(D1([z1, z2])))             decoder, linear output

The training loss per point is the single-sample surrogate

    1/2 |x - x_hat|^2  +  log q(z|x)  +  beta E(z)  (+ log Z when enumerable)

where the prior parameters receive contrastive-divergence gradients with the
relaxed ``z`` as positive phase.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import boltzmann as bm
from .bits import MAX_WIDTH, pack_bits
from .data import Scaler, fit_scaler
from .errors import ContractViolation, FormatError, NumericFailure
from .latent import ALPHA, bernoulli_cross_entropy, binarize, draw_noise, reparam_sample
from .nn import AdamState, DenseLayer, adam_step, backprop, forward, init_layer
from .quantum import PathIntegralChains

log = logging.getLogger(__name__)

PRIOR_KINDS = ("rbm", "simulated-qbm", "external-sampler")


@dataclass
class QvaeConfig:
    d_data: int
    d_latent: int = 64
    hidden: tuple = (128, 64)
    decoder_hidden: int = 128
    alpha: float = ALPHA
    prior: str = "rbm"
    gamma: float = 0.0
    beta: float = 1.0
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 30
    l2: float = 1e-3
    kl_warmup_epochs: int = 5
    cd_chains: int = 64
    cd_steps: int = 5
    trotter_slices: int = 64
    precision: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.d_latent % 2 or not 2 <= self.d_latent <= MAX_WIDTH:
            raise ContractViolation(f"d_latent must be even and <= {MAX_WIDTH}, got {self.d_latent}")
        if self.prior not in PRIOR_KINDS:
            raise ContractViolation(f"unknown prior {self.prior!r}; choose from {PRIOR_KINDS}")
        if self.gamma < 0:
            raise ContractViolation("gamma must be non-negative")
        if self.beta <= 0:
            raise ContractViolation("beta must be positive")
        if self.precision not in ("float32", "float64"):
            raise ContractViolation("precision is float32 or float64")
        if len(self.hidden) != 2:
            raise ContractViolation("the encoder trunk has exactly two hidden layers")

    @property
    def dtype(self):
        return np.dtype(self.precision)


@dataclass
class QvaeModel:
    config: QvaeConfig
    trunk: list
    head1: DenseLayer
    head2: DenseLayer
    decoder: list
    prior: bm.RbmParams
    scaler: Scaler
    history: list = field(default_factory=list)

    @property
    def group_width(self) -> int:
        return self.config.d_latent // 2

    def parameters(self) -> list:
        out = []
        for layer in [*self.trunk, self.head1, self.head2, *self.decoder]:
            out += [layer.weights, layer.bias]
        return out + [self.prior.w, self.prior.b]

    def set_parameters(self, params) -> None:
        it = iter(params)
        for layer in [*self.trunk, self.head1, self.head2, *self.decoder]:
            layer.weights = next(it)
            layer.bias = next(it)
        self.prior = bm.RbmParams(next(it), next(it))

    def parameter_names(self) -> list:
        names = []
        for tag, layers in (("trunk", self.trunk), ("head1", [self.head1]),
                            ("head2", [self.head2]), ("decoder", self.decoder)):
            for i, _ in enumerate(layers):
                suffix = f"{i}" if len(layers) > 1 else ""
                names += [f"{tag}{suffix}.weights", f"{tag}{suffix}.bias"]
        return names + ["prior.w", "prior.b"]


def init_model(cfg: QvaeConfig, rng, scaler: Scaler | None = None) -> QvaeModel:
    dt = cfg.dtype
    h1, h2 = cfg.hidden
    g = cfg.d_latent // 2
    trunk = [init_layer(cfg.d_data, h1, rng, dtype=dt), init_layer(h1, h2, rng, dtype=dt)]
    head1 = init_layer(h2, g, rng, relu=False, dtype=dt)
    head2 = init_layer(h2 + g, g, rng, relu=False, dtype=dt)
    decoder = [
        init_layer(cfg.d_latent, cfg.decoder_hidden, rng, dtype=dt),
        init_layer(cfg.decoder_hidden, cfg.d_data, rng, relu=False, dtype=dt),
    ]
    prior = bm.RbmParams.zeros(cfg.d_latent, dtype=dt)
    if scaler is None:
        scaler = Scaler(np.zeros(cfg.d_data, np.float32), np.ones(cfg.d_data, np.float32))
    return QvaeModel(cfg, trunk, head1, head2, decoder, prior, scaler)


@dataclass
class _Encoded:
    zeta: np.ndarray
    z: np.ndarray
    dz_dzeta: np.ndarray
    trunk_cache: object
    head1_cache: object
    head2_cache: object


def _encode(model: QvaeModel, x, rho) -> _Encoded:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.config.d_data:
        raise ContractViolation(f"input width {x.shape[1]} != d_data {model.config.d_data}")
    rho = np.atleast_2d(rho)
    g = model.group_width
    alpha = model.config.alpha
    f, c_trunk = forward(x, model.trunk)
    zeta1, c_h1 = forward(f, [model.head1])
    z1, dz1 = reparam_sample(zeta1, rho[:, :g], alpha)
    zeta2, c_h2 = forward(np.concatenate([f, z1], axis=1), [model.head2])
    z2, dz2 = reparam_sample(zeta2, rho[:, g:], alpha)
    return _Encoded(
        zeta=np.concatenate([zeta1, zeta2], axis=1),
        z=np.concatenate([z1, z2], axis=1),
        dz_dzeta=np.concatenate([dz1, dz2], axis=1),
        trunk_cache=c_trunk, head1_cache=c_h1, head2_cache=c_h2,
    )


def encode(model: QvaeModel, x, rho):
    """Logits and relaxed latent sample for standardized rows ``x`` and noise ``rho``."""
    enc = _encode(model, x, rho)
    return enc.zeta, enc.z


def decode(model: QvaeModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.config.d_latent:
        raise ContractViolation(f"latent width {z.shape[-1]} != {model.config.d_latent}")
    out, _ = forward(z, model.decoder)
    return out


@dataclass
class ElboReport:
    reconstruction: float
    log_q: float  # E_q[log q], the negative posterior entropy
    prior_energy: float  # E_q[beta E(z)]
    log_z: float | None  # exact log partition when enumerable
    l2_penalty: float
    total: float
    ok: bool = True


def elbo_and_grads(model: QvaeModel, batch, rng=None, rho=None, negatives=None,
                   negative_weights=None, kl_weight=1.0):
    """Surrogate loss on a standardized batch and its gradient for every parameter.

    ``negatives`` are prior samples for the CD negative phase;
    ``negative_weights`` makes that phase an exact weighted average (e.g.
    all states weighted by ``exact_pmf``). ``kl_weight`` scales the
    posterior and prior terms (KL warm-up). Gradients are returned in the
    order of :meth:`QvaeModel.parameters`.
    """
    cfg = model.config
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    n = x.shape[0]
    if rho is None:
        rho = draw_noise(rng, (n, cfg.d_latent))
    if negatives is None:
        raise ContractViolation("elbo_and_grads needs negative-phase samples")
    beta = cfg.beta
    g = model.group_width
    prior64 = bm.RbmParams(model.prior.w.astype(np.float64), model.prior.b.astype(np.float64))

    enc = _encode(model, x, rho)
    x_hat, dec_cache = forward(enc.z, model.decoder)
    resid = x_hat - x
    recon = 0.5 * np.mean(np.sum(resid**2, axis=1))
    log_q, dlq_dzeta, dlq_dz = bernoulli_cross_entropy(enc.zeta, enc.z)
    energy = bm.rbm_energy(prior64, enc.z)
    log_z = None
    if cfg.d_latent <= bm.MAX_EXACT_STATES:
        log_z = bm.exact_log_partition(prior64, beta)
    l2_pen = 0.5 * cfg.l2 * (np.sum(prior64.w**2) + np.sum(prior64.b**2))
    kl = log_q.mean() + beta * energy.mean() + (log_z or 0.0)
    total = recon + kl_weight * kl + l2_pen
    report = ElboReport(float(recon), float(log_q.mean()), float(beta * energy.mean()),
                        log_z, float(l2_pen), float(total), ok=bool(np.isfinite(total)))

    dec_grads, dz = backprop(dec_cache, model.decoder, resid / n)
    dz = dz + kl_weight * (dlq_dz + beta * bm.energy_grad_z(prior64, enc.z)) / n
    dzeta = kl_weight * dlq_dzeta / n + dz * enc.dz_dzeta
    h2_grads, d_in2 = backprop(enc.head2_cache, [model.head2], dzeta[:, g:])
    f_width = d_in2.shape[1] - g
    dzeta1 = dzeta[:, :g] + d_in2[:, f_width:] * enc.dz_dzeta[:, :g]
    h1_grads, df = backprop(enc.head1_cache, [model.head1], dzeta1)
    trunk_grads, _ = backprop(enc.trunk_cache, model.trunk, df + d_in2[:, :f_width])

    cd_w, cd_b = bm.cd_gradients(enc.z, negatives, beta, negative_weights)
    l2_w, l2_b = bm.l2_gradient(prior64, cfg.l2)
    grads = []
    for gw, gb in [*trunk_grads, *h1_grads, *h2_grads, *dec_grads]:
        grads += [gw, gb]
    grads += [-kl_weight * cd_w + l2_w, -kl_weight * cd_b + l2_b]
    return report, grads


Sampler = Callable[[bm.RbmParams, int, np.random.Generator], np.ndarray]


def make_sampler(cfg: QvaeConfig, rng, external: Sampler | None = None):
    """Negative-phase sampler for the configured prior kind."""
    if cfg.prior == "rbm":
        chains = bm.PersistentGibbs(cfg.d_latent, cfg.cd_chains, cfg.cd_steps, rng)
        return lambda prior: chains.sample(prior, cfg.beta)
    if cfg.prior == "simulated-qbm":
        chains = PathIntegralChains(cfg.d_latent, cfg.gamma, cfg.beta, cfg.cd_chains,
                                    cfg.trotter_slices, cfg.cd_steps, rng)
        return chains.sample
    if external is None:
        raise ContractViolation("prior 'external-sampler' needs a sampler callable")
    return lambda prior: np.asarray(external(prior, cfg.cd_chains, rng), dtype=np.uint8)


def train(X, cfg: QvaeConfig, rng=None, sampler: Sampler | None = None,
          callback=None) -> QvaeModel:
    """Fit a model on raw data ``X`` (the scaler is fitted here and stored).

    Each step encodes a minibatch, draws negatives from the prior sampler,
    takes one Adam step on every parameter and clamps the prior into the
    unit box. Per-epoch means of the loss terms go to ``model.history``.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != cfg.d_data:
        raise ContractViolation(f"data must be (n, {cfg.d_data})")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    scaler = fit_scaler(X)
    Xs = scaler.transform(X)
    model = init_model(cfg, rng, scaler)
    negative_sampler = make_sampler(cfg, rng, sampler)
    params = model.parameters()
    state = AdamState.for_params(params, lr=cfg.lr)
    n = len(Xs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)
        steps = 0
        kl_weight = min(1.0, (epoch + 1) / (cfg.kl_warmup_epochs + 1))
        for start in range(0, n, cfg.batch_size):
            batch = Xs[order[start:start + cfg.batch_size]]
            negatives = negative_sampler(model.prior)
            report, grads = elbo_and_grads(model, batch, rng, negatives=negatives,
                                           kl_weight=kl_weight)
            if not report.ok:
                raise NumericFailure(
                    f"non-finite loss at epoch {epoch}, step {steps}: {report}"
                )
            params, state = adam_step(params, grads, state)
            model.set_parameters(params)
            model.prior = bm.project_box(model.prior)
            params[-2:] = [model.prior.w, model.prior.b]
            sums += [report.total, report.reconstruction, report.log_q, report.prior_energy]
            steps += 1
        entry = dict(zip(("loss", "reconstruction", "log_q", "prior_energy"), sums / steps))
        entry["epoch"] = epoch
        model.history.append(entry)
        log.info("epoch %d loss %.4f recon %.4f", epoch, entry["loss"], entry["reconstruction"])
        if callback is not None:
            callback(model, entry)
    return model


def hash_bits(model: QvaeModel, X, batch_size=8192) -> np.ndarray:
    """Deterministic codes of raw rows as 0/1 arrays.

    Group 1 is binarized from its logits; group 2 is conditioned on the
    binarized group-1 bits rather than a noisy sample.
    """
    X = np.atleast_2d(np.asarray(X))
    if X.shape[1] != model.config.d_data:
        raise ContractViolation(f"input width {X.shape[1]} != d_data {model.config.d_data}")
    out = np.empty((len(X), model.config.d_latent), dtype=np.uint8)
    for s in range(0, len(X), batch_size):
        xs = model.scaler.transform(X[s:s + batch_size])
        f, _ = forward(xs, model.trunk)
        z1 = binarize(forward(f, [model.head1])[0])
        z2 = binarize(forward(np.concatenate([f, z1], axis=1), [model.head2])[0])
        out[s:s + batch_size] = np.concatenate([z1, z2], axis=1)
    return out


def hash_codes(model: QvaeModel, X, batch_size=8192) -> np.ndarray:
    """Packed uint64 codes of raw rows."""
    return pack_bits(hash_bits(model, X, batch_size))


# ---------------------------------------------------------------------------
# model file: b"QVAE" | version u32 | config (u32 length + JSON) |
#             tensor count u32 | per tensor: name (u32 length + utf-8),
#             ndim u32, dims u32 * ndim, float32 little-endian data

MODEL_MAGIC = b"QVAE"
MODEL_VERSION = 1


def model_to_bytes(model: QvaeModel) -> bytes:
    cfg = asdict(model.config)
    cfg["hidden"] = list(cfg["hidden"])
    blob = json.dumps(cfg, sort_keys=True).encode()
    tensors = [("scaler.mean", model.scaler.mean), ("scaler.std", model.scaler.std)]
    tensors += list(zip(model.parameter_names(), model.parameters()))
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(blob)), blob,
             struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n) -> memoryview:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated model file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals


def model_from_bytes(buf) -> QvaeModel:
    r = _Reader(buf)
    if bytes(r.take(4)) != MODEL_MAGIC:
        raise FormatError("bad model magic")
    version = r.u32()
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    cfg_dict = json.loads(bytes(r.take(r.u32())).decode())
    cfg_dict["precision"] = "float32"
    cfg = QvaeConfig(**cfg_dict)
    tensors = {}
    for _ in range(r.u32()):
        name = bytes(r.take(r.u32())).decode()
        ndim = r.u32()
        shape = r.u32(ndim) if ndim > 1 else ((r.u32(),) if ndim == 1 else ())
        count = int(np.prod(shape))
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after model tensors")
    model = init_model(cfg, np.random.default_rng(0))
    try:
        model.scaler = Scaler(tensors["scaler.mean"], tensors["scaler.std"])
        params = [tensors[name] for name in model.parameter_names()]
    except KeyError as exc:
        raise FormatError(f"model file lacks tensor {exc}") from None
    for old, new in zip(model.parameters(), params):
        if old.shape != new.shape:
            raise FormatError(f"tensor shape {new.shape} does not match config ({old.shape})")
    model.set_parameters(params)
    return model


def save_model(path, model: QvaeModel) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> QvaeModel:
    return model_from_bytes(Path(path).read_bytes())
