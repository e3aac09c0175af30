"""
Deep-kernel Gaussian-process surrogate
A tanh feature network feeding an RBF Gaussian process, trained by
marginal-likelihood ascent with analytic gradients
"""

import io
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from ..data.models import Patch
from ..exceptions import (
    CholeskyError,
    DatasetIOError,
    DimensionError,
    InputError,
    InsufficientPointsError,
    NumericalError,
)

logger = logging.getLogger(__name__)

MODEL_BLOB_VERSION = 1
LOG_2PI = float(np.log(2.0 * np.pi))

# Box constraints on the log hyperparameters during training
LOG_LENGTHSCALE_BOUNDS = (np.log(1e-3), np.log(1e3))
LOG_SIGNAL_VAR_BOUNDS = (np.log(1e-4), np.log(1e4))
LOG_NOISE_VAR_BOUNDS = (np.log(1e-6), np.log(1e1))


@dataclass
class FeatureNet:
    """One-hidden-layer tanh network mapping flattened patches to latents"""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(
        cls, n_inputs: int, hidden: int, latent_dim: int, rng: np.random.Generator
    ) -> "FeatureNet":
        """Weights ~ N(0, 1/fan_in), zero biases"""
        return cls(
            W1=rng.normal(0.0, np.sqrt(1.0 / n_inputs), size=(hidden, n_inputs)),
            b1=np.zeros(hidden),
            W2=rng.normal(0.0, np.sqrt(1.0 / hidden), size=(latent_dim, hidden)),
            b2=np.zeros(latent_dim),
        )

    @property
    def n_inputs(self) -> int:
        return int(self.W1.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.W1.shape[0])

    @property
    def latent_dim(self) -> int:
        return int(self.W2.shape[0])

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Latents (n x d) and hidden activations (n x h) for rows of X"""
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise DimensionError(
                f"Feature net expects {self.n_inputs} inputs, got shape {X.shape}"
            )
        hidden = np.tanh(X @ self.W1.T + self.b1)
        return hidden @ self.W2.T + self.b2, hidden

    def copy(self) -> "FeatureNet":
        return FeatureNet(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())


@dataclass
class GPHyper:
    """RBF kernel hyperparameters, stored as natural logs"""

    log_lengthscale: float = 0.0
    log_signal_var: float = 0.0
    log_noise_var: float = float(np.log(0.1))

    @classmethod
    def from_values(
        cls, lengthscale: float, signal_var: float, noise_var: float
    ) -> "GPHyper":
        """A noise_var of 0 gives a jitter-only (noiseless) process"""
        with np.errstate(divide="ignore"):
            return cls(
                log_lengthscale=float(np.log(lengthscale)),
                log_signal_var=float(np.log(signal_var)),
                log_noise_var=float(np.log(noise_var)),
            )

    @property
    def lengthscale(self) -> float:
        return float(np.exp(self.log_lengthscale))

    @property
    def signal_var(self) -> float:
        return float(np.exp(self.log_signal_var))

    @property
    def noise_var(self) -> float:
        return float(np.exp(self.log_noise_var))


class FitConfig(BaseModel):
    """Training schedule and architecture of the surrogate"""

    epochs: int = Field(default=50, ge=1, description="Gradient steps per fit")
    learning_rate: float = Field(default=0.01, gt=0.0, description="Step size")
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0, description="Momentum coefficient")
    seed: int = Field(default=0, description="Network initialisation seed")
    jitter: float = Field(default=1e-8, gt=0.0, description="Base Cholesky jitter")
    hidden: int = Field(default=64, ge=1, description="Hidden units")
    latent_dim: int = Field(default=2, ge=1, description="Latent dimension")
    max_grad_norm: float = Field(default=10.0, gt=0.0, description="Gradient norm clip")
    init_lengthscale: float = Field(default=1.0, gt=0.0)
    init_signal_var: float = Field(default=1.0, gt=0.0)
    init_noise_var: float = Field(default=0.1, gt=0.0)
    warm_start: bool = Field(default=True, description="Reuse the previous model's weights")


@dataclass(eq=False)
class DKLModel:
    """A conditioned deep-kernel GP; immutable once built"""

    net: FeatureNet
    hyper: GPHyper
    latents: np.ndarray
    targets: np.ndarray
    target_mean: float
    target_scale: float
    chol: np.ndarray
    alpha: np.ndarray
    input_min: float
    input_max: float
    jitter: float
    evidence: float

    @property
    def n_train(self) -> int:
        return int(self.latents.shape[0])

    def scale_inputs(self, X: np.ndarray) -> np.ndarray:
        return _scale(X, self.input_min, self.input_max)


@dataclass
class Prediction:
    """Predictive moments plus how many variances were clamped at zero"""

    mean: np.ndarray
    var: np.ndarray
    n_clamped: int


def _scale(X: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    return (X - lo) / span if span > 0 else X - lo


def _as_inputs(patches) -> np.ndarray:
    if isinstance(patches, Patch):
        patches = patches.flat()[None, :]
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError(f"Expected an n x p patch matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("Patch inputs contain non-finite values")
    return X


def latent(net: FeatureNet, patch) -> np.ndarray:
    """Latent vector of a single patch"""
    x = patch.flat() if isinstance(patch, Patch) else np.asarray(patch, dtype=np.float64).ravel()
    if x.size != net.n_inputs:
        raise DimensionError(f"Patch has {x.size} values, net expects {net.n_inputs}")
    z, _ = net.forward(x[None, :])
    return z[0]


def kernel(z1: np.ndarray, z2: np.ndarray, hyper: GPHyper) -> float:
    """σf²·exp(-‖z1 - z2‖² / 2ℓ²)"""
    diff = np.asarray(z1, dtype=np.float64) - np.asarray(z2, dtype=np.float64)
    return hyper.signal_var * float(np.exp(-float(diff @ diff) / (2.0 * hyper.lengthscale**2)))


def kernel_matrix(Z1: np.ndarray, Z2: np.ndarray, hyper: GPHyper) -> np.ndarray:
    sq = cdist(np.atleast_2d(Z1), np.atleast_2d(Z2), "sqeuclidean")
    return hyper.signal_var * np.exp(-sq / (2.0 * hyper.lengthscale**2))


def _cholesky(K: np.ndarray, jitter: float) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating jitter through 0, ε, 10ε, 100ε"""
    eye = np.eye(K.shape[0])
    for extra in (0.0, jitter, 10.0 * jitter, 100.0 * jitter):
        try:
            L = cholesky(K + extra * eye, lower=True)
        except LinAlgError:
            continue
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            if extra > 0:
                logger.debug(f"Cholesky needed jitter {extra:.1e}")
            return L, extra
    raise CholeskyError(
        f"Kernel matrix of size {K.shape[0]} is not positive definite "
        f"even with jitter {100.0 * jitter:.1e}"
    )


def _standardize(y: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Zero mean, unit variance for n >= 2; raw targets otherwise"""
    if y.size < 2:
        return y.copy(), 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    scale = std if std > 0 else 1.0
    return (y - mean) / scale, mean, scale


def _as_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != n:
        raise DimensionError(f"{y.size} targets for {n} inputs")
    if not np.all(np.isfinite(y)):
        raise InputError("Targets contain non-finite values")
    return y


def _evidence(
    net: FeatureNet,
    hyper: GPHyper,
    X: np.ndarray,
    y: np.ndarray,
    jitter: float,
    with_gradient: bool,
):
    n = X.shape[0]
    Z, hidden = net.forward(X)
    sq = cdist(Z, Z, "sqeuclidean")
    ell2 = hyper.lengthscale**2
    Kf = hyper.signal_var * np.exp(-sq / (2.0 * ell2))
    K = Kf + hyper.noise_var * np.eye(n)
    L, extra = _cholesky(K, jitter)
    alpha = cho_solve((L, True), y)
    value = float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)
    if not with_gradient:
        return value, None, None

    K_inv = cho_solve((L, True), np.eye(n))
    G = 0.5 * (np.outer(alpha, alpha) - K_inv)
    M = G * Kf

    hyper_grad = GPHyper(
        log_lengthscale=float(np.sum(M * sq) / ell2),
        log_signal_var=float(np.sum(M)),
        log_noise_var=float(hyper.noise_var * np.trace(G)),
    )

    gZ = -(2.0 / ell2) * (M.sum(axis=1)[:, None] * Z - M @ Z)
    g_pre = (gZ @ net.W2) * (1.0 - hidden**2)
    net_grad = FeatureNet(
        W1=g_pre.T @ X,
        b1=g_pre.sum(axis=0),
        W2=gZ.T @ hidden,
        b2=gZ.sum(axis=0),
    )
    return value, net_grad, hyper_grad


def log_marginal_likelihood(
    net: FeatureNet, hyper: GPHyper, patches, y, jitter: float = 1e-8
) -> float:
    """
    GP evidence of the (internally standardized) targets.

    -½yᵀ(K+σn²I)⁻¹y - ½log|K+σn²I| - (n/2)log 2π, with raw targets when n < 2.
    """
    X = _as_inputs(patches)
    y, _, _ = _standardize(_as_targets(y, X.shape[0]))
    value, _, _ = _evidence(net, hyper, X, y, jitter, with_gradient=False)
    return value


def log_marginal_likelihood_grad(
    net: FeatureNet, hyper: GPHyper, patches, y, jitter: float = 1e-8
) -> Tuple[float, FeatureNet, GPHyper]:
    """Evidence and its gradient w.r.t. every net weight and log hyperparameter"""
    X = _as_inputs(patches)
    y, _, _ = _standardize(_as_targets(y, X.shape[0]))
    return _evidence(net, hyper, X, y, jitter, with_gradient=True)


def _flatten(net: FeatureNet, hyper: GPHyper) -> np.ndarray:
    return np.concatenate(
        [
            net.W1.ravel(),
            net.b1,
            net.W2.ravel(),
            net.b2,
            [hyper.log_lengthscale, hyper.log_signal_var, hyper.log_noise_var],
        ]
    )


def _unflatten(theta: np.ndarray, like: FeatureNet) -> Tuple[FeatureNet, GPHyper]:
    h, p, d = like.hidden, like.n_inputs, like.latent_dim
    sizes = np.cumsum([h * p, h, d * h, d])
    W1, b1, W2, b2, rest = np.split(theta, sizes)
    return (
        FeatureNet(W1.reshape(h, p).copy(), b1.copy(), W2.reshape(d, h).copy(), b2.copy()),
        GPHyper(float(rest[0]), float(rest[1]), float(rest[2])),
    )


def _clip_hyper(hyper: GPHyper) -> GPHyper:
    return GPHyper(
        log_lengthscale=float(np.clip(hyper.log_lengthscale, *LOG_LENGTHSCALE_BOUNDS)),
        log_signal_var=float(np.clip(hyper.log_signal_var, *LOG_SIGNAL_VAR_BOUNDS)),
        log_noise_var=float(np.clip(hyper.log_noise_var, *LOG_NOISE_VAR_BOUNDS)),
    )


def build_model(
    net: FeatureNet,
    hyper: GPHyper,
    patches,
    y,
    jitter: float = 1e-8,
    input_range: Optional[Tuple[float, float]] = None,
) -> DKLModel:
    """
    Condition a GP on training data without any training.

    Args:
        net: Feature network
        hyper: Kernel hyperparameters
        patches: n x p raw patch matrix
        y: n targets
        jitter: Base Cholesky jitter
        input_range: (min, max) used to scale patches; (0, 1) leaves them as-is
    """
    X_raw = _as_inputs(patches)
    lo, hi = (0.0, 1.0) if input_range is None else (float(input_range[0]), float(input_range[1]))
    X = _scale(X_raw, lo, hi)
    n = X.shape[0]
    if n < 1:
        raise InsufficientPointsError("Cannot condition a GP on zero points")
    y_std, y_mean, y_scale = _standardize(_as_targets(y, n))

    Z, _ = net.forward(X)
    K = kernel_matrix(Z, Z, hyper) + hyper.noise_var * np.eye(n)
    L, extra = _cholesky(K, jitter)
    alpha = cho_solve((L, True), y_std)
    evidence = float(-0.5 * y_std @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)

    return DKLModel(
        net=net.copy(),
        hyper=GPHyper(hyper.log_lengthscale, hyper.log_signal_var, hyper.log_noise_var),
        latents=Z,
        targets=y_std,
        target_mean=y_mean,
        target_scale=y_scale,
        chol=L,
        alpha=alpha,
        input_min=lo,
        input_max=hi,
        jitter=extra,
        evidence=evidence,
    )


def fit(
    patches,
    y,
    cfg: Optional[FitConfig] = None,
    input_range: Optional[Tuple[float, float]] = None,
    init: Optional[DKLModel] = None,
) -> DKLModel:
    """
    Train net weights and hyperparameters by momentum ascent on the evidence.

    Args:
        patches: n x p raw patch matrix, n >= 2
        y: n finite targets
        cfg: Training schedule
        input_range: (min, max) for patch scaling; defaults to the training patches' range
        init: Previous model to warm-start from

    Returns:
        The model at the best-evidence iterate (never worse than the start)
    """
    cfg = cfg or FitConfig()
    X_raw = _as_inputs(patches)
    n, p = X_raw.shape
    if n < 2:
        raise InsufficientPointsError(f"Surrogate training needs >= 2 points, got {n}")
    y_raw = _as_targets(y, n)
    if input_range is None:
        input_range = (float(X_raw.min()), float(X_raw.max()))
    X = _scale(X_raw, *input_range)
    y_std, _, _ = _standardize(y_raw)

    warm = (
        cfg.warm_start
        and init is not None
        and init.net.n_inputs == p
        and init.net.hidden == cfg.hidden
        and init.net.latent_dim == cfg.latent_dim
    )
    if warm:
        net, hyper = init.net.copy(), init.hyper
    else:
        net = FeatureNet.init(p, cfg.hidden, cfg.latent_dim, np.random.default_rng(cfg.seed))
        hyper = GPHyper.from_values(cfg.init_lengthscale, cfg.init_signal_var, cfg.init_noise_var)
    hyper = _clip_hyper(hyper)

    theta = _flatten(net, hyper)
    velocity = np.zeros_like(theta)
    best_theta, best_value = theta.copy(), -np.inf
    initial_value = None

    for epoch in range(cfg.epochs + 1):
        net, hyper = _unflatten(theta, net)
        value, net_grad, hyper_grad = _evidence(net, hyper, X, y_std, cfg.jitter, with_gradient=True)
        if initial_value is None:
            initial_value = value
        if value > best_value:
            best_theta, best_value = theta.copy(), value
        if epoch == cfg.epochs:
            break

        grad = _flatten(net_grad, hyper_grad) / n
        if not np.all(np.isfinite(grad)) or not np.isfinite(value):
            raise NumericalError(
                f"Non-finite evidence gradient at epoch {epoch} "
                f"(evidence {value}, lengthscale {hyper.lengthscale:.3g}, "
                f"noise {hyper.noise_var:.3g})"
            )
        norm = float(np.linalg.norm(grad))
        if norm > cfg.max_grad_norm:
            grad *= cfg.max_grad_norm / norm

        velocity = cfg.momentum * velocity + cfg.learning_rate * grad
        theta = theta + velocity
        net, hyper = _unflatten(theta, net)
        theta[-3:] = _flatten(net, _clip_hyper(hyper))[-3:]

    net, hyper = _unflatten(best_theta, net)
    model = build_model(net, hyper, X_raw, y_raw, jitter=cfg.jitter, input_range=input_range)
    logger.debug(
        f"Fitted surrogate on {n} points: evidence {initial_value:.4f} -> {best_value:.4f}, "
        f"lengthscale {hyper.lengthscale:.3g}, noise {hyper.noise_var:.3g}"
    )
    return model


def predict_with_diagnostics(model: DKLModel, patches) -> Prediction:
    """Predictive mean and variance, de-standardized, with a clamp counter"""
    X = model.scale_inputs(_as_inputs(patches))
    if X.shape[1] != model.net.n_inputs:
        raise DimensionError(
            f"Model expects {model.net.n_inputs} inputs, got {X.shape[1]}"
        )
    Z, _ = model.net.forward(X)
    K_star = kernel_matrix(Z, model.latents, model.hyper)
    mean_std = K_star @ model.alpha
    v = solve_triangular(model.chol, K_star.T, lower=True)
    var_std = model.hyper.signal_var - np.sum(v * v, axis=0)

    negative = var_std < 0
    n_clamped = int(np.sum(negative))
    var_std = np.where(negative, 0.0, var_std)

    return Prediction(
        mean=model.target_mean + model.target_scale * mean_std,
        var=model.target_scale**2 * var_std,
        n_clamped=n_clamped,
    )


def predict(model: DKLModel, patches) -> Tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance at each patch"""
    prediction = predict_with_diagnostics(model, patches)
    if prediction.n_clamped:
        logger.warning(f"Clamped {prediction.n_clamped} negative predictive variances to 0")
    return prediction.mean, prediction.var


def dump_model(model: DKLModel) -> bytes:
    """Serialise as one version byte followed by an uncompressed .npz archive"""
    buffer = io.BytesIO()
    np.savez(
        buffer,
        W1=model.net.W1,
        b1=model.net.b1,
        W2=model.net.W2,
        b2=model.net.b2,
        hyper=np.array(
            [model.hyper.log_lengthscale, model.hyper.log_signal_var, model.hyper.log_noise_var]
        ),
        latents=model.latents,
        targets=model.targets,
        chol=model.chol,
        alpha=model.alpha,
        scalars=np.array(
            [
                model.target_mean,
                model.target_scale,
                model.input_min,
                model.input_max,
                model.jitter,
                model.evidence,
            ]
        ),
    )
    return bytes([MODEL_BLOB_VERSION]) + buffer.getvalue()


def load_model(blob: bytes) -> DKLModel:
    """Inverse of dump_model"""
    if not blob or blob[0] != MODEL_BLOB_VERSION:
        version = blob[0] if blob else None
        raise DatasetIOError(f"Unsupported model blob version {version!r}")
    try:
        with np.load(io.BytesIO(blob[1:])) as archive:
            data = {key: archive[key] for key in archive.files}
    except (OSError, ValueError, KeyError) as e:
        raise DatasetIOError(f"Corrupt model blob: {e}") from e

    hyper = data["hyper"]
    target_mean, target_scale, input_min, input_max, jitter, evidence = data["scalars"]
    return DKLModel(
        net=FeatureNet(data["W1"], data["b1"], data["W2"], data["b2"]),
        hyper=GPHyper(float(hyper[0]), float(hyper[1]), float(hyper[2])),
        latents=data["latents"],
        targets=data["targets"],
        target_mean=float(target_mean),
        target_scale=float(target_scale),
        chol=data["chol"],
        alpha=data["alpha"],
        input_min=float(input_min),
        input_max=float(input_max),
        jitter=float(jitter),
        evidence=float(evidence),
    )
