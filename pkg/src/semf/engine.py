"""Monte Carlo EM training of per-source encoders and a decoder.

Each outer step, for every batch of training rows:

1. draw ``R`` latent vectors per row from the Gaussian encoders,
2. weight them by the decoder likelihood of the observed outcome,
3. refit the decoder, the encoders and the noise scales under those weights.

Training stops after ``max_steps`` or once the validation RMSE of the point
prediction has not improved for ``patience`` steps; the best step is kept.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngs
from .errors import ConfigError, NumericError
from .learners import fit_residual_scale_models, fit_weighted, make_learner

log = logging.getLogger(__name__)

RESIDUAL_MODELS = "residual_models"
HALF_NORMAL_TO_SD = math.sqrt(math.pi / 2)
LOG_2PI = math.log(2 * math.pi)

# hyper-parameter grid searched by the sweep
GRID = {
    "R": (5, 10, 25, 50, 100),
    "m_k": (1, 5, 10, 20, 30),
    "sigma": (0.001, 0.01, 0.1, 1.0, RESIDUAL_MODELS),
    "patience": (5, 10),
    "R_infer": (30, 50, 70),
}


@dataclass(frozen=True)
class SemfConfig:
    R: int = 10
    R_infer: int = 50
    m_k: int | tuple = 10
    sigma: float | str = RESIDUAL_MODELS
    patience: int = 5
    max_steps: int = 50
    n_batches: int = 1
    seed: int = 0
    sigma_min: float = 1e-6
    sigma_init: float = 1.0
    init: str = "jittered_outcome"

    def __post_init__(self):
        if self.R < 1 or self.R_infer < 1:
            raise ConfigError("R and R_infer must be >= 1")
        dims = self.m_k if isinstance(self.m_k, tuple) else (self.m_k,)
        if any(int(m) < 1 for m in dims):
            raise ConfigError("latent widths m_k must be >= 1")
        if isinstance(self.sigma, str):
            if self.sigma != RESIDUAL_MODELS:
                raise ConfigError(f"sigma must be a positive number or {RESIDUAL_MODELS!r}")
        elif not self.sigma > 0:
            raise ConfigError("fixed sigma_k must be > 0")
        if self.patience < 1 or self.max_steps < 1 or self.n_batches < 1:
            raise ConfigError("patience, max_steps and n_batches must be >= 1")
        if not self.sigma_min > 0:
            raise ConfigError("sigma_min must be > 0")
        if self.init != "jittered_outcome":
            raise ConfigError(f"unknown init strategy {self.init!r}")

    @property
    def residual_mode(self) -> bool:
        return self.sigma == RESIDUAL_MODELS

    def latent_dims(self, n_sources: int) -> tuple:
        if isinstance(self.m_k, tuple):
            if len(self.m_k) != n_sources:
                raise ConfigError(f"m_k has {len(self.m_k)} entries for {n_sources} sources")
            return tuple(int(m) for m in self.m_k)
        return (int(self.m_k),) * n_sources

    def in_grid(self) -> bool:
        return (self.R in GRID["R"] and self.m_k in GRID["m_k"] and self.sigma in GRID["sigma"]
                and self.patience in GRID["patience"] and self.R_infer in GRID["R_infer"])


@dataclass
class SemfModel:
    encoders: list
    decoder: object
    sigma: float
    latent_dims: tuple
    config: SemfConfig
    sigma_k: tuple = ()
    scale_models: list | None = None
    history: list = field(default_factory=list)
    best_step: int = 0

    @property
    def n_sources(self) -> int:
        return len(self.encoders)

    def latent_params(self, X_sources):
        """Encoder means and scales, each an (n, sum m_k) array."""
        n = len(X_sources[0])
        floor = self.config.sigma_min
        means, scales = [], []
        for k, (enc, Xk) in enumerate(zip(self.encoders, X_sources)):
            mu = np.asarray(enc.predict(Xk), dtype=float).reshape(n, self.latent_dims[k])
            if not np.isfinite(mu).all():
                raise NumericError(f"encoder {k} produced non-finite means")
            means.append(mu)
            if self.scale_models is not None:
                s = np.asarray(self.scale_models[k].predict(Xk), dtype=float).reshape(n, self.latent_dims[k])
                scales.append(np.maximum(HALF_NORMAL_TO_SD * s, floor))
            else:
                scales.append(np.full((n, self.latent_dims[k]), max(self.sigma_k[k], floor)))
        return np.concatenate(means, axis=1), np.concatenate(scales, axis=1)

    def decode(self, z):
        """Decoder mean for latents of shape (..., sum m_k)."""
        lead = z.shape[:-1]
        out = np.asarray(self.decoder.predict(z.reshape(-1, z.shape[-1])), dtype=float).reshape(lead)
        if not np.isfinite(out).all():
            raise NumericError("decoder produced non-finite predictions")
        return out


@dataclass
class WeightedSampleBuffer:
    """Rows replicated ``R`` times per example with their importance weights."""

    y: np.ndarray
    z: np.ndarray
    x_sources: list
    weights: np.ndarray
    n_examples: int
    R: int
    latent_dims: tuple

    @classmethod
    def build(cls, X_sources, y, z, w, latent_dims):
        n, R, M = z.shape
        if w.shape != (n, R):
            raise ValueError(f"weights {w.shape} do not match latents {z.shape}")
        return cls(
            y=np.repeat(y, R),
            z=z.reshape(n * R, M),
            x_sources=[np.repeat(Xk, R, axis=0) for Xk in X_sources],
            weights=w.reshape(-1),
            n_examples=n,
            R=R,
            latent_dims=tuple(latent_dims),
        )

    def source_slices(self):
        edges = np.cumsum((0,) + self.latent_dims)
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def per_example_weight_sums(self):
        return self.weights.reshape(self.n_examples, self.R).sum(axis=1)

    def compact_source(self, k, target=None):
        """Collapse the ``R`` rows of each example into one row.

        For squared-error learners, fitting ``sum_r w_r ||t_r - g(x)||^2`` with
        ``sum_r w_r = 1`` equals fitting the weighted mean target at weight 1,
        up to a constant.  Returns ``(x, mean_target, weight)``.
        """
        n, R = self.n_examples, self.R
        t = self.z[:, self.source_slices()[k]] if target is None else target
        t = t.reshape(n, R, -1)
        w = self.weights.reshape(n, R)
        W = w.sum(axis=1)
        tbar = (w[:, :, None] * t).sum(axis=1) / W[:, None]
        x = self.x_sources[k].reshape(n, R, -1)[:, 0, :]
        return x, tbar, W


def gaussian_log_density(y, mean, sigma):
    """log N(y; mean, sigma^2), elementwise."""
    r = np.asarray(y, dtype=float) - np.asarray(mean, dtype=float)
    return -0.5 * LOG_2PI - math.log(sigma) - r * r / (2.0 * sigma * sigma)


def decoder_log_density(y, z, model: SemfModel):
    """Log-likelihood of outcome ``y`` given latent ``z`` under the decoder."""
    z = np.asarray(z, dtype=float)
    if not np.isfinite(z).all():
        raise NumericError("non-finite latent vector")
    single = z.ndim == 1
    mean = model.decode(z[None, :] if single else z)
    out = gaussian_log_density(y, mean, max(model.sigma, model.config.sigma_min))
    return float(out[0]) if single else out


def compute_weights(log_densities):
    """Normalize log-densities into importance weights along the last axis.

    Rows whose entries are all ``-inf`` get uniform weights and a warning.
    """
    ld = np.asarray(log_densities, dtype=float)
    if ld.shape[-1] < 1:
        raise ValueError("need at least one sample")
    if np.isnan(ld).any() or np.isposinf(ld).any():
        raise NumericError("log-densities must be finite or -inf")
    top = ld.max(axis=-1, keepdims=True)
    dead = ~np.isfinite(top)
    safe_top = np.where(dead, 0.0, top)
    e = np.exp(ld - safe_top)
    s = e.sum(axis=-1, keepdims=True)
    w = np.where(dead, 1.0 / ld.shape[-1], e / np.where(dead, 1.0, s))
    if dead.any():
        log.warning("%d example(s) had zero likelihood under every sample; using uniform weights", int(dead.sum()))
    return w


def sample_latents(model: SemfModel, X_sources, R: int, rng: np.random.Generator):
    """Draw ``R`` latent vectors per row: an (n, R, sum m_k) array."""
    mu, sd = model.latent_params(X_sources)
    eps = rng.standard_normal((mu.shape[0], R, mu.shape[1]))
    return mu[:, None, :] + sd[:, None, :] * eps


def sigma_update(y, decoded, w):
    """Weighted mean squared decoder residual over the examples of a batch.

    ``decoded`` and ``w`` are (n, R); the weights of each row sum to one.
    """
    r = np.asarray(y, dtype=float)[:, None] - decoded
    return float((w * r * r).sum() / len(y))


def m_step(model: SemfModel, X_sources, y, z, w, prototypes=None, monitor=None) -> SemfModel:
    """Refit decoder, encoders and scales on one weighted batch.

    ``prototypes`` is ``(encoder_protos, decoder_proto, scale_protos)``; by
    default the model's current learners are cloned.  ``monitor`` is an
    optional ``(X_sources, y, z, w)`` batch, weighted by the same E-step, that
    early-stopping learners watch.
    """
    enc_protos, dec_proto, scale_protos = prototypes or (model.encoders, model.decoder, model.scale_models)
    buf = WeightedSampleBuffer.build(X_sources, y, z, w, model.latent_dims)
    mbuf = None if monitor is None else WeightedSampleBuffer.build(*monitor, model.latent_dims)
    decoder = fit_weighted(dec_proto, buf.z, buf.y, buf.weights,
                           monitor=None if mbuf is None else (mbuf.z, mbuf.y, mbuf.weights))
    n, R = w.shape
    decoded = np.asarray(decoder.predict(buf.z), dtype=float).reshape(n, R)
    sigma = max(math.sqrt(sigma_update(y, decoded, w)), model.config.sigma_min)
    encoders = []
    for k in range(model.n_sources):
        mon = None if mbuf is None else mbuf.compact_source(k)
        encoders.append(fit_weighted(enc_protos[k], *buf.compact_source(k), monitor=mon))
    scale_models = None
    if model.config.residual_mode:
        scale_models = []
        for k in range(model.n_sources):
            args = _abs_residual_rows(buf, k, encoders[k])
            mon = None if mbuf is None else _abs_residual_rows(mbuf, k, encoders[k])
            scale_models.append(fit_weighted(scale_protos[k], *args, monitor=mon))
    return replace(model, encoders=encoders, decoder=decoder, sigma=sigma, scale_models=scale_models)


def _abs_residual_rows(buf, k, encoder):
    sl = buf.source_slices()[k]
    x = buf.x_sources[k].reshape(buf.n_examples, buf.R, -1)[:, 0, :]
    mu = np.repeat(np.asarray(encoder.predict(x)).reshape(buf.n_examples, -1), buf.R, axis=0)
    return buf.compact_source(k, target=np.abs(buf.z[:, sl] - mu))


def e_step(model: SemfModel, X_sources, y, R, rng):
    """Sample latents and their normalized decoder-likelihood weights."""
    z = sample_latents(model, X_sources, R, rng)
    ld = gaussian_log_density(np.asarray(y)[:, None], model.decode(z), model.sigma)
    return z, compute_weights(ld)


def _initial_model(config, X_sources, y, protos, latent_dims):
    enc_protos, dec_proto, scale_protos = protos
    g = rngs.stream(config.seed, rngs.INIT)
    jitter = config.sigma_init if config.residual_mode else float(config.sigma)
    z_parts = [y[:, None] + jitter * g.standard_normal((len(y), m)) for m in latent_dims]
    encoders = [fit_weighted(p, Xk, zk) for p, Xk, zk in zip(enc_protos, X_sources, z_parts)]
    z = np.concatenate(z_parts, axis=1)
    decoder = fit_weighted(dec_proto, z, y)
    resid = y - np.asarray(decoder.predict(z), dtype=float)
    sigma = max(float(np.sqrt(np.mean(resid ** 2))), config.sigma_min)
    scale_models = None
    sigma_k = ()
    if config.residual_mode:
        scale_models = fit_residual_scale_models(encoders, X_sources, z_parts, np.ones(len(y)), scale_protos)
    else:
        sigma_k = (float(config.sigma),) * len(latent_dims)
    return SemfModel(encoders=encoders, decoder=decoder, sigma=sigma, latent_dims=tuple(latent_dims),
                     config=config, sigma_k=sigma_k, scale_models=scale_models)


def make_prototypes(family, n_sources, seed, learner_params=None):
    """Unfitted learners for the encoders, the decoder and the scale models."""
    params = dict(learner_params or {})
    enc = [make_learner(family, seed=rngs.derive_seed(seed, rngs.LEARNER, k), **params) for k in range(n_sources)]
    dec = make_learner(family, seed=rngs.derive_seed(seed, rngs.LEARNER, n_sources), **params)
    scl = [make_learner(family, seed=rngs.derive_seed(seed, rngs.LEARNER, n_sources + 1 + k), **params)
           for k in range(n_sources)]
    return enc, dec, scl


def train(config: SemfConfig, dataset, family="boosted", learner_params=None) -> SemfModel:
    """Fit a model on a standardized, split dataset.

    Learners that early stop train on the train segment and watch an E-step
    on the carved early-stop rows; other families train on both.  The
    validation segment drives patience.  Returns the best-validation model
    with the full per-step history attached.
    """
    from .inference import predict_point

    if dataset.split is None:
        raise ConfigError("dataset must be split before training")
    split = dataset.split
    dims = config.latent_dims(dataset.n_sources)
    protos = make_prototypes(family, dataset.n_sources, config.seed, learner_params)
    early = protos[1].early_stopping and len(split.early_stop_idx) > 0
    tr = split.fit_idx(early_stopping=early)
    Xs, y = dataset.sources(tr), dataset.outcome[tr]
    Xv, yv = dataset.sources(split.valid_idx), dataset.outcome[split.valid_idx]
    if early:
        Xe, ye = dataset.sources(split.early_stop_idx), dataset.outcome[split.early_stop_idx]

    model = _initial_model(config, Xs, y, protos, dims)
    valid_seed = rngs.derive_seed(config.seed, rngs.VALID)

    def score(m):
        pred = predict_point(m, Xv, config.R_infer, seed=valid_seed)
        val = float(np.sqrt(np.mean((pred - yv) ** 2)))
        if not math.isfinite(val):
            raise NumericError("non-finite validation score")
        return val

    best_score = score(model)
    history = [{"step": 0, "valid_rmse": best_score, "sigma": model.sigma}]
    best, best_step, stale = model, 0, 0
    order = rngs.stream(config.seed, rngs.BATCH).permutation(len(y))
    batches = [b for b in np.array_split(order, config.n_batches) if len(b)]
    for step in range(1, config.max_steps + 1):
        for b, rows in enumerate(batches):
            Xb = [Xk[rows] for Xk in Xs]
            yb = y[rows]
            z, w = e_step(model, Xb, yb, config.R, rngs.stream(config.seed, rngs.LATENT, step, b))
            monitor = None
            if early:
                ze, we = e_step(model, Xe, ye, config.R, rngs.stream(config.seed, rngs.LATENT, step, b, 1))
                monitor = (Xe, ye, ze, we)
            model = m_step(model, Xb, yb, z, w, protos, monitor=monitor)
        val = score(model)
        history.append({"step": step, "valid_rmse": val, "sigma": model.sigma})
        log.debug("step %d valid_rmse=%.5f sigma=%.4f", step, val, model.sigma)
        if val < best_score:
            best, best_score, best_step, stale = model, val, step, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return replace(best, history=history, best_step=best_step)
