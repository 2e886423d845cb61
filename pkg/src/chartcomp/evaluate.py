"""Precoding-side decoding stage and performance metrics.

Covers the denormalization of decoded directions back into channel
estimates, the classical linear precoders (maximum-ratio and regularized
minimum-mean-square-error) under the uniform per-user power constraint
(column norms 1/sqrt(K)), the single-user squared cosine alignment, the
grouped multi-user sum-rate sweep, the compression ratio and the learnable
parameter count.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .model import DecoderParams, EncoderParams, decode_batch, encode_batch

PRECODER_TYPES = ("true_mrt", "true_mmse", "learned_mrt", "learned_mmse")


def rho(v, h) -> float:
    """Squared cosine alignment |v^H h|^2 / (||v||^2 ||h||^2), in [0, 1]."""
    v = np.asarray(v, dtype=np.complex128).ravel()
    h = np.asarray(h, dtype=np.complex128).ravel()
    nv, nh = np.linalg.norm(v), np.linalg.norm(h)
    if nv == 0.0 or nh == 0.0:
        raise ValueError("squared cosine alignment undefined for zero-norm inputs")
    return float(min(np.abs(np.vdot(v, h)) ** 2 / (nv * nh) ** 2, 1.0))


def rho_values(enc: EncoderParams, dec: DecoderParams, H: np.ndarray,
               targets: np.ndarray) -> np.ndarray:
    """Per-sample alignment between decoded precoders and target channels."""
    Z, _ = encode_batch(enc, H)
    V = decode_batch(dec, Z)
    num = np.abs(np.sum(V.conj() * targets, axis=0)) ** 2
    den = np.sum(np.abs(targets) ** 2, axis=0)
    return np.minimum(num / den, 1.0)


@dataclass
class RhoStats:
    values: np.ndarray
    mean: float
    median: float
    cdf: np.ndarray  # (101, 2) columns: threshold, cumulative fraction

    @classmethod
    def from_values(cls, values: np.ndarray) -> "RhoStats":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ConfigError("cannot build statistics from an empty sample set")
        grid = np.linspace(0.0, 1.0, 101)
        frac = np.searchsorted(np.sort(values), grid, side="right") / values.size
        return cls(values=values, mean=float(values.mean()),
                   median=float(np.median(values)), cdf=np.column_stack([grid, frac]))


def rho_stats(enc: EncoderParams, dec: DecoderParams, H: np.ndarray,
              targets: np.ndarray) -> RhoStats:
    """Alignment statistics of a model over a test set, with a 101-point CDF."""
    return RhoStats.from_values(rho_values(enc, dec, H, targets))


def oracle_rho_stats(targets: np.ndarray) -> RhoStats:
    """Statistics of the ideal decoder (precoder collinear with the channel)."""
    norms = np.linalg.norm(targets, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm target channel")
    V = targets / norms
    num = np.abs(np.sum(V.conj() * targets, axis=0)) ** 2
    den = norms ** 2
    return RhoStats.from_values(np.minimum(num / den, 1.0))


def reconstruct_channel(v: np.ndarray, norm: float) -> np.ndarray:
    """Denormalize a unit direction back to a channel-scale vector."""
    if norm <= 0:
        raise ConfigError("channel norm must be > 0")
    return norm * np.asarray(v, dtype=np.complex128)


def mrt_precoder(Hhat: np.ndarray) -> np.ndarray:
    """Maximum-ratio columns w_k = h_k / (sqrt(K) ||h_k||)."""
    Hhat = np.asarray(Hhat, dtype=np.complex128)
    k = Hhat.shape[1]
    norms = np.linalg.norm(Hhat, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero-norm channel column at index {zero[0]}")
    return Hhat / (np.sqrt(k) * norms)


def mmse_precoder(Hhat: np.ndarray, noise_var: float) -> np.ndarray:
    """Regularized inverse (H H^H + K sigma^2 I)^{-1} H, renormalized per column."""
    Hhat = np.asarray(Hhat, dtype=np.complex128)
    if noise_var <= 0:
        raise ConfigError("noise_var must be > 0")
    n_a, k = Hhat.shape
    gram = Hhat @ Hhat.conj().T + k * noise_var * np.eye(n_a)
    raw = np.linalg.solve(gram, Hhat)
    norms = np.linalg.norm(raw, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"regularized inverse produced a zero column at index {zero[0]}")
    return raw / (np.sqrt(k) * norms)


def sum_rate(channels: np.ndarray, W: np.ndarray, noise_vars) -> float:
    """Group rate sum_k log2(1 + |h_k^H w_k|^2 / (sigma_k^2 + interference))."""
    channels = np.asarray(channels, dtype=np.complex128)
    W = np.asarray(W, dtype=np.complex128)
    noise_vars = np.asarray(noise_vars, dtype=float).ravel()
    if channels.shape != W.shape or noise_vars.size != channels.shape[1]:
        raise ConfigError("channels, precoders and noise variances must agree in size")
    if np.any(noise_vars <= 0):
        raise ConfigError("noise variances must be > 0")
    cross = np.abs(channels.conj().T @ W) ** 2      # cross[k, j] = |h_k^H w_j|^2
    signal = np.diag(cross)
    interference = cross.sum(axis=1) - signal
    return float(np.sum(np.log2(1.0 + signal / (noise_vars + interference))))


@dataclass
class SumRateCurve:
    snr_db: np.ndarray
    rates: dict[str, np.ndarray]   # keys from PRECODER_TYPES
    group_count: int


def _random_groups(n: int, k: int, seed: int) -> list[np.ndarray]:
    if k < 1 or k > n:
        raise ConfigError(f"group size K={k} must be within the split size {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_groups = n // k
    return [order[g * k:(g + 1) * k] for g in range(n_groups)]


def sum_rate_sweep(enc: EncoderParams, dec: DecoderParams, H: np.ndarray,
                   targets: np.ndarray, K: int, snr_grid_db, group_seed: int,
                   oracle: bool = False) -> SumRateCurve:
    """Grouped sum-rate against SNR for learned and true precoders.

    Users are partitioned into seeded random disjoint groups of size K. For
    each grid point the (shared) noise variance is set so the mean per-user
    received SNR under true maximum-ratio precoding equals the grid value.
    The learned precoders are built from denormalized decoder outputs
    (direction from the model, norm from the true channel); rates are always
    computed against the true channels.
    """
    snr_grid_db = np.asarray(snr_grid_db, dtype=float).ravel()
    groups = _random_groups(H.shape[1], K, group_seed)
    if not groups:
        raise ConfigError("not enough samples for a single group")

    if oracle:
        Hhat = targets.copy()
    else:
        Z, _ = encode_batch(enc, H)
        V = decode_batch(dec, Z)
        Hhat = V * np.linalg.norm(targets, axis=0)

    used = np.concatenate(groups)
    mean_mrt_power = float(np.mean(np.linalg.norm(targets[:, used], axis=0) ** 2)) / K

    rates = {name: np.zeros(snr_grid_db.size) for name in PRECODER_TYPES}
    for gi, (snr_db) in enumerate(snr_grid_db):
        sigma2 = mean_mrt_power / 10.0 ** (snr_db / 10.0)
        acc = {name: 0.0 for name in PRECODER_TYPES}
        for group in groups:
            Ht = targets[:, group]
            Hh = Hhat[:, group]
            noise = np.full(K, sigma2)
            acc["true_mrt"] += sum_rate(Ht, mrt_precoder(Ht), noise)
            acc["true_mmse"] += sum_rate(Ht, mmse_precoder(Ht, sigma2), noise)
            acc["learned_mrt"] += sum_rate(Ht, mrt_precoder(Hh), noise)
            acc["learned_mmse"] += sum_rate(Ht, mmse_precoder(Hh, sigma2), noise)
        for name in PRECODER_TYPES:
            rates[name][gi] = acc[name] / len(groups)
    return SumRateCurve(snr_db=snr_grid_db, rates=rates, group_count=len(groups))


def compression_ratio(n_a: int, n_s: int, d: int) -> Fraction:
    """Real-coefficient count of raw CSI over that of the feedback payload
    (chart location plus one norm scalar); exact rational."""
    if n_a < 1 or n_s < 1 or d < 1:
        raise ConfigError("all dimensions must be >= 1")
    return Fraction(2 * n_a * n_s, d + 1)


def compression_ratio_location_only(n_a: int, n_s: int, d: int) -> Fraction:
    """Variant that excludes the norm scalar from the payload."""
    if n_a < 1 or n_s < 1 or d < 1:
        raise ConfigError("all dimensions must be >= 1")
    return Fraction(2 * n_a * n_s, d)


def param_count(D: int, N: int, d: int, F: int, T: int, n_out: int,
                encoder_learnable: bool = True) -> int:
    """Number of learnable real scalars (complex entries count twice)."""
    decoder = F * d + 2 * ((F + 1) * T + (T + 1) * T + (T + 1) * n_out)
    encoder = 2 * D * N + d * N + 1 if encoder_learnable else 0
    return encoder + decoder
