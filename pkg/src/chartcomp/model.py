"""Forward passes of the charting encoder and the Fourier-feature decoder.

The encoder embeds a channel as a convex combination of calibration chart
locations: attention weights are a softmax (temperature beta) over the
modulus cosine similarity between the input channel and each calibration
channel, so the embedding is exactly invariant to a global phase rotation
or positive rescaling of the input.

The decoder lifts a chart location through sinusoidal features
f = exp(j 2 pi B z), packing cos as the real and sin as the imaginary part,
then applies a three-layer complex MLP with split ReLU activations and
normalizes the output to a unit-norm precoding vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .charting import Chart, _as_channel_matrix
from .errors import ConfigError, DegenerateOutputError


@dataclass(frozen=True)
class EncoderParams:
    Dmat: np.ndarray   # complex, D x N calibration channels
    Zmat: np.ndarray   # real, d x N chart locations
    beta: float        # softmax temperature, > 0

    def __post_init__(self):
        if self.Dmat.shape[1] != self.Zmat.shape[1]:
            raise ConfigError("Dmat and Zmat must have the same number of columns")
        # beta = 0 (uniform attention) is a valid evaluation point; the
        # optimizer clamps it strictly positive during training
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if np.any(np.linalg.norm(self.Dmat, axis=0) == 0.0):
            raise ConfigError("Dmat contains a zero-norm calibration column")

    @property
    def n_calibration(self) -> int:
        return self.Dmat.shape[1]


@dataclass(frozen=True)
class DecoderParams:
    B: np.ndarray    # real, F x d frequency matrix
    W1: np.ndarray   # complex, T x F
    b1: np.ndarray   # complex, T
    W2: np.ndarray   # complex, T x T
    b2: np.ndarray   # complex, T
    W3: np.ndarray   # complex, N_out x T
    b3: np.ndarray   # complex, N_out

    def __post_init__(self):
        t, f = self.W1.shape
        if self.B.shape[0] != f:
            raise ConfigError("W1 input width must match the frequency count")
        if self.W2.shape != (t, t) or self.b1.shape != (t,) or self.b2.shape != (t,):
            raise ConfigError("hidden layer shapes are inconsistent")
        if self.W3.shape[1] != t or self.b3.shape != (self.W3.shape[0],):
            raise ConfigError("output layer shapes are inconsistent")

    @property
    def n_out(self) -> int:
        return self.W3.shape[0]


@dataclass(frozen=True)
class ModelConfig:
    d: int = 2
    F: int = 200
    T: int = 128
    sigma_B: float = 1.0
    target_subcarrier: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.F < 1 or self.T < 1:
            raise ConfigError("d, F and T must all be >= 1")
        if self.sigma_B < 0:
            raise ConfigError("sigma_B must be >= 0")
        if self.target_subcarrier < 0:
            raise ConfigError("target_subcarrier must be >= 0")


def similarity_profile(enc: EncoderParams, H: np.ndarray) -> np.ndarray:
    """Modulus cosine similarity of each input column against each calibration
    channel; shape N x M for an input batch of M columns."""
    col_norms = np.linalg.norm(enc.Dmat, axis=0)
    in_norms = np.linalg.norm(H, axis=0)
    if np.any(in_norms == 0.0):
        raise ValueError("cannot encode a zero-norm channel")
    return np.abs(enc.Dmat.conj().T @ H) / (col_norms[:, None] * in_norms[None, :])


def _softmax_columns(y: np.ndarray) -> np.ndarray:
    shifted = y - y.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def encode_batch(enc: EncoderParams, H: np.ndarray):
    """Embed a D x M batch; returns (Z: d x M, attention weights: N x M)."""
    sims = similarity_profile(enc, H)
    w = _softmax_columns(enc.beta * sims)
    return enc.Zmat @ w, w


def encode(enc: EncoderParams, h) -> tuple[np.ndarray, np.ndarray]:
    """Embed one channel into a chart location (plus its attention weights)."""
    h = np.asarray(h, dtype=np.complex128).ravel()
    z, w = encode_batch(enc, h[:, None])
    return z[:, 0], w[:, 0]


def relu_c(x: np.ndarray) -> np.ndarray:
    """Split complex ReLU: clamps real and imaginary parts at zero independently."""
    x = np.asarray(x)
    return np.maximum(x.real, 0.0) + 1j * np.maximum(x.imag, 0.0)


def rff_features(B: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Unit-modulus sinusoidal features exp(j 2 pi B z) of a chart location."""
    u = 2.0 * np.pi * (B @ z)
    return np.cos(u) + 1j * np.sin(u)


def mlp_forward(dec: DecoderParams, f: np.ndarray) -> np.ndarray:
    """Three complex affine layers with split ReLUs between (none on the output)."""
    a1 = dec.W1 @ f + _col(dec.b1, f)
    a2 = dec.W2 @ relu_c(a1) + _col(dec.b2, f)
    return dec.W3 @ relu_c(a2) + _col(dec.b3, f)


def _col(b: np.ndarray, like: np.ndarray) -> np.ndarray:
    return b[:, None] if like.ndim == 2 else b


def decode_batch(dec: DecoderParams, Z: np.ndarray) -> np.ndarray:
    """Decode d x M chart locations into unit-norm columns (N_out x M)."""
    raw = mlp_forward(dec, rff_features(dec.B, Z))
    norms = np.linalg.norm(raw, axis=0)
    if np.any(norms == 0.0):
        raise DegenerateOutputError("decoder produced an exactly-zero output vector")
    return raw / norms


def decode(dec: DecoderParams, z) -> np.ndarray:
    """Decode one chart location into a unit-norm precoding vector."""
    z = np.asarray(z, dtype=float).ravel()
    return decode_batch(dec, z[:, None])[:, 0]


def init_model(config: ModelConfig, chart: Chart, calibration_channels,
               n_out: int | None = None) -> tuple[EncoderParams, DecoderParams]:
    """Deterministic initialization from the calibration set and its chart.

    The calibration channels and chart locations are copied into the encoder
    with temperature 1. The frequency matrix is i.i.d. N(0, sigma_B^2) and the
    MLP layers use a uniform init with bound 1/sqrt(fan_in) applied to real
    and imaginary parts independently, all drawn from ``config.rng_seed``.
    """
    Dmat = _as_channel_matrix(calibration_channels)
    if chart.Z.shape[1] != Dmat.shape[1]:
        raise ConfigError("chart column count must equal the calibration count")
    if chart.Z.shape[0] != config.d:
        raise ConfigError(f"chart dimension {chart.Z.shape[0]} != configured d={config.d}")
    if np.any(np.linalg.norm(Dmat, axis=0) == 0.0):
        raise ConfigError("calibration set contains a zero-norm channel")
    if n_out is None:
        n_out = Dmat.shape[0]

    rng = np.random.default_rng(config.rng_seed)
    B = rng.normal(0.0, config.sigma_B, size=(config.F, config.d))

    def layer(n_rows: int, fan_in: int):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(n_rows, fan_in)) \
            + 1j * rng.uniform(-bound, bound, size=(n_rows, fan_in))
        b = rng.uniform(-bound, bound, size=n_rows) \
            + 1j * rng.uniform(-bound, bound, size=n_rows)
        return w, b

    W1, b1 = layer(config.T, config.F)
    W2, b2 = layer(config.T, config.T)
    W3, b3 = layer(n_out, config.T)

    enc = EncoderParams(Dmat=Dmat.copy(), Zmat=chart.Z.copy(), beta=1.0)
    dec = DecoderParams(B=B, W1=W1, b1=b1, W2=W2, b2=b2, W3=W3, b3=b3)
    return enc, dec


def with_encoder_matrices(enc: EncoderParams, Dmat: np.ndarray, Zmat: np.ndarray) -> EncoderParams:
    return replace(enc, Dmat=Dmat, Zmat=Zmat)
