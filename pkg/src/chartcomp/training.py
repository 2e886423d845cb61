"""Task-oriented loss, exact gradients, Adam loop and similarity subsampling.

The loss on a batch of channels is one minus the mean squared cosine
alignment between the decoded unit-norm precoder and the target-subcarrier
channel. Gradients are accumulated in reverse through normalize -> MLP ->
split ReLU -> sinusoidal features -> convex combination -> softmax ->
modulus similarity, treating every complex parameter as an independent
(real, imaginary) pair. A gradient array for a complex tensor is stored as
a complex array whose real/imaginary parts are the partials with respect to
the real/imaginary parts of the parameter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import Dataset
from .errors import ConfigError, DegenerateOutputError, DivergenceError, NumericError
from .evaluate import rho_values
from .model import DecoderParams, EncoderParams, encode, encode_batch

_BETA_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 100
    rng_seed: int = 0
    patience: int = 20          # epochs without validation improvement
    val_fraction: float = 0.1   # carved from the train split for model selection
    freeze_encoder: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")


@dataclass(frozen=True)
class SubsampleConfig:
    keep_count: int
    swap_probability: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.keep_count < 1:
            raise ConfigError("keep_count must be >= 1")
        if not 0.0 <= self.swap_probability <= 1.0:
            raise ConfigError("swap_probability must be in [0, 1]")


@dataclass
class GradientSet:
    dDmat: np.ndarray
    dZmat: np.ndarray
    dbeta: float
    dB: np.ndarray
    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: np.ndarray
    dW3: np.ndarray
    db3: np.ndarray


def _check_finite(stage: str, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in {stage}")


def _forward(enc: EncoderParams, dec: DecoderParams, H: np.ndarray, targets: np.ndarray):
    """Shared forward pass; returns the loss and every intermediate needed
    for the backward sweep."""
    if H.shape[1] == 0:
        raise ConfigError("batch must be nonempty")
    hnorms = np.linalg.norm(H, axis=0)
    if np.any(hnorms == 0.0):
        raise ValueError("zero-norm channel in batch")
    tnorms_sq = np.sum(np.abs(targets) ** 2, axis=0)
    if np.any(tnorms_sq == 0.0):
        raise ValueError("zero-norm target channel in batch")

    dnorms = np.linalg.norm(enc.Dmat, axis=0)
    G = enc.Dmat.conj().T @ H                                   # N x M
    S = np.abs(G) / (dnorms[:, None] * hnorms[None, :])
    _check_finite("encoder similarities", S)
    Y = enc.beta * S
    shifted = Y - Y.max(axis=0, keepdims=True)
    expY = np.exp(shifted)
    W = expY / expY.sum(axis=0, keepdims=True)                  # N x M
    Zb = enc.Zmat @ W                                           # d x M
    _check_finite("chart locations", Zb)

    U = 2.0 * np.pi * (dec.B @ Zb)                              # F x M
    Feat = np.cos(U) + 1j * np.sin(U)
    A1 = dec.W1 @ Feat + dec.b1[:, None]
    R1 = np.maximum(A1.real, 0.0) + 1j * np.maximum(A1.imag, 0.0)
    A2 = dec.W2 @ R1 + dec.b2[:, None]
    R2 = np.maximum(A2.real, 0.0) + 1j * np.maximum(A2.imag, 0.0)
    Raw = dec.W3 @ R2 + dec.b3[:, None]                         # N_out x M
    _check_finite("decoder activations", A1, A2, Raw)

    rnorms = np.linalg.norm(Raw, axis=0)
    if np.any(rnorms == 0.0):
        raise DegenerateOutputError("decoder produced an exactly-zero output vector")
    V = Raw / rnorms
    C = np.sum(V.conj() * targets, axis=0)                      # v^H t per column
    ell_raw = np.abs(C) ** 2 / tnorms_sq
    ell = np.minimum(ell_raw, 1.0)                              # Cauchy-Schwarz bound
    loss = float(1.0 - ell.mean())
    _check_finite("loss", np.array([loss]))

    cache = dict(H=H, targets=targets, hnorms=hnorms, tnorms_sq=tnorms_sq,
                 dnorms=dnorms, G=G, S=S, W=W, Zb=Zb, U=U, Feat=Feat,
                 A1=A1, R1=R1, A2=A2, R2=R2, Raw=Raw, rnorms=rnorms, V=V, C=C,
                 ell_raw=ell_raw)
    return loss, cache


def loss_batch(enc: EncoderParams, dec: DecoderParams, H: np.ndarray,
               targets: np.ndarray) -> float:
    """Mean task loss of a batch; 0 iff every decoded precoder is phase-aligned
    with its normalized target channel, at most 1 by Cauchy-Schwarz."""
    loss, _ = _forward(enc, dec, H, targets)
    return loss


def backward(enc: EncoderParams, dec: DecoderParams, H: np.ndarray,
             targets: np.ndarray) -> tuple[float, GradientSet]:
    """Loss plus exact partial derivatives for every learnable real scalar."""
    loss, c = _forward(enc, dec, H, targets)
    m_batch = H.shape[1]
    targets_ = c["targets"]

    # d(loss)/dV, complex pair form; samples clipped at the bound contribute 0
    active = (c["ell_raw"] < 1.0).astype(float)
    gV = (-1.0 / m_batch) * (2.0 / c["tnorms_sq"]) * active * targets_ * np.conj(c["C"])

    # through the unit-norm normalization
    inner = np.sum(c["V"].conj() * gV, axis=0).real
    gRaw = (gV - c["V"] * inner) / c["rnorms"]

    # decoder MLP
    gW3 = gRaw @ c["R2"].conj().T
    gb3 = gRaw.sum(axis=1)
    gR2 = dec.W3.conj().T @ gRaw
    gA2 = (c["A2"].real > 0) * gR2.real + 1j * ((c["A2"].imag > 0) * gR2.imag)
    gW2 = gA2 @ c["R1"].conj().T
    gb2 = gA2.sum(axis=1)
    gR1 = dec.W2.conj().T @ gA2
    gA1 = (c["A1"].real > 0) * gR1.real + 1j * ((c["A1"].imag > 0) * gR1.imag)
    gW1 = gA1 @ c["Feat"].conj().T
    gb1 = gA1.sum(axis=1)
    gFeat = dec.W1.conj().T @ gA1

    # sinusoidal features: f = cos(u) + j sin(u)
    gU = -gFeat.real * np.sin(c["U"]) + gFeat.imag * np.cos(c["U"])
    gB = 2.0 * np.pi * (gU @ c["Zb"].T)
    gZb = 2.0 * np.pi * (dec.B.T @ gU)

    # convex combination and softmax
    gW = enc.Zmat.T @ gZb
    gZmat = gZb @ c["W"].T
    gY = c["W"] * (gW - np.sum(c["W"] * gW, axis=0, keepdims=True))
    gbeta = float(np.sum(c["S"] * gY))
    gS = enc.beta * gY

    # modulus cosine similarity back to the calibration channels
    absG = np.abs(c["G"])
    sign = np.divide(c["G"], absG, out=np.zeros_like(c["G"]), where=absG > 0.0)
    scale = gS / (c["dnorms"][:, None] * c["hnorms"][None, :])
    term1 = c["H"] @ (scale * np.conj(sign)).T
    coeff = np.sum(gS * c["S"], axis=1) / c["dnorms"] ** 2
    gDmat = term1 - enc.Dmat * coeff[None, :]

    grads = GradientSet(dDmat=gDmat, dZmat=gZmat, dbeta=gbeta, dB=gB,
                        dW1=gW1, db1=gb1, dW2=gW2, db2=gb2, dW3=gW3, db3=gb3)
    _check_finite("gradients", gDmat, gZmat, np.array([gbeta]), gB,
                  gW1, gb1, gW2, gb2, gW3, gb3)
    return loss, grads


# ---------------------------------------------------------------------------
# flat real parameter view (Adam, finite differences, masking)

def _flatten(arrays) -> np.ndarray:
    parts = []
    for arr in arrays:
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            parts.append(np.ascontiguousarray(arr).view(np.float64).ravel())
        else:
            parts.append(np.asarray(arr, dtype=np.float64).ravel())
    return np.concatenate(parts)


def flatten_params(enc: EncoderParams, dec: DecoderParams) -> np.ndarray:
    return _flatten([enc.Dmat, enc.Zmat, np.array([enc.beta]), dec.B,
                     dec.W1, dec.b1, dec.W2, dec.b2, dec.W3, dec.b3])


def flatten_grads(grads: GradientSet) -> np.ndarray:
    return _flatten([grads.dDmat, grads.dZmat, np.array([grads.dbeta]), grads.dB,
                     grads.dW1, grads.db1, grads.dW2, grads.db2, grads.dW3, grads.db3])


def encoder_scalar_count(enc: EncoderParams) -> int:
    return 2 * enc.Dmat.size + enc.Zmat.size + 1


def unflatten_params(flat: np.ndarray, enc: EncoderParams,
                     dec: DecoderParams) -> tuple[EncoderParams, DecoderParams]:
    pos = 0

    def take(template):
        nonlocal pos
        template = np.asarray(template)
        if np.iscomplexobj(template):
            n = 2 * template.size
            out = flat[pos:pos + n].copy().view(np.complex128).reshape(template.shape)
        else:
            n = template.size
            out = flat[pos:pos + n].reshape(template.shape).copy()
        pos += n
        return out

    Dmat = take(enc.Dmat)
    Zmat = take(enc.Zmat)
    beta = float(flat[pos])
    pos += 1
    dec2 = DecoderParams(B=take(dec.B), W1=take(dec.W1), b1=take(dec.b1),
                         W2=take(dec.W2), b2=take(dec.b2),
                         W3=take(dec.W3), b3=take(dec.b3))
    assert pos == flat.size
    enc2 = EncoderParams(Dmat=Dmat, Zmat=Zmat, beta=max(beta, _BETA_FLOOR))
    return enc2, dec2


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0)


def adam_step(enc: EncoderParams, dec: DecoderParams, grads: GradientSet,
              state: AdamState, config: TrainConfig,
              update_mask: np.ndarray | None = None):
    """One bias-corrected Adam update; returns new params and state."""
    theta = flatten_params(enc, dec)
    g = flatten_grads(grads)
    if update_mask is not None:
        g = np.where(update_mask, g, 0.0)
    t = state.step + 1
    m = config.adam_beta1 * state.m + (1.0 - config.adam_beta1) * g
    v = config.adam_beta2 * state.v + (1.0 - config.adam_beta2) * g * g
    m_hat = m / (1.0 - config.adam_beta1 ** t)
    v_hat = v / (1.0 - config.adam_beta2 ** t)
    step = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    if update_mask is not None:
        step = np.where(update_mask, step, 0.0)
    theta = theta - step
    enc2, dec2 = unflatten_params(theta, enc, dec)
    return enc2, dec2, AdamState(m=m, v=v, step=t)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_median_rho: float
    val_mean_rho: float
    wall_time_s: float


@dataclass
class TrainResult:
    enc: EncoderParams
    dec: DecoderParams
    log: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    diverged: bool = False


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.size, batch_size):
        yield order[start:start + batch_size]


def train(enc: EncoderParams, dec: DecoderParams, dataset: Dataset,
          target_subcarrier: int, config: TrainConfig,
          epoch_callback=None) -> TrainResult:
    """Mini-batch Adam training on the train split.

    A validation subset (``config.val_fraction`` of the train split, chosen
    from the config seed) drives model selection and early stopping on the
    median squared cosine alignment. Returns the best-validation parameters;
    a non-finite loss aborts with the best parameters seen so far.
    ``epoch_callback(epoch, enc, dec)``, when given, runs after every epoch
    (used by the CLI for epoch-suffixed checkpoints).
    """
    H_all = dataset.channel_matrix("train")
    T_all = dataset.target_blocks("train", target_subcarrier)
    n = H_all.shape[1]
    if n == 0:
        raise ConfigError("dataset has an empty train split")
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds train split size {n}")

    rng = np.random.default_rng(config.rng_seed)
    n_val = int(round(config.val_fraction * n))
    perm = rng.permutation(n)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size == 0:
        raise ConfigError("validation fraction leaves no training samples")
    H_tr, T_tr = H_all[:, tr_idx], T_all[:, tr_idx]
    H_val, T_val = H_all[:, val_idx], T_all[:, val_idx]

    mask = None
    if config.freeze_encoder:
        mask = np.ones(flatten_params(enc, dec).size, dtype=bool)
        mask[:encoder_scalar_count(enc)] = False

    state = AdamState.zeros(flatten_params(enc, dec).size)
    result = TrainResult(enc=enc, dec=dec)
    best_median = -np.inf
    stall = 0
    t0 = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(tr_idx.size)
        losses = []
        try:
            for batch in _batches(order, min(config.batch_size, tr_idx.size)):
                loss, grads = backward(enc, dec, H_tr[:, batch], T_tr[:, batch])
                losses.append(loss)
                enc, dec, state = adam_step(enc, dec, grads, state, config, mask)
        except (NumericError, DivergenceError):
            result.diverged = True
            break

        train_loss = float(np.mean(losses))
        if not np.isfinite(train_loss):
            result.diverged = True
            break
        if n_val:
            vals = rho_values(enc, dec, H_val, T_val)
            val_median, val_mean = float(np.median(vals)), float(np.mean(vals))
        else:
            val_median = val_mean = float("nan")
        result.log.append(EpochStats(epoch=epoch, train_loss=train_loss,
                                     val_median_rho=val_median, val_mean_rho=val_mean,
                                     wall_time_s=time.perf_counter() - t0))
        if epoch_callback is not None:
            epoch_callback(epoch, enc, dec)

        if n_val:
            if val_median > best_median:
                best_median = val_median
                result.enc, result.dec, result.best_epoch = enc, dec, epoch
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    break
        else:
            result.enc, result.dec, result.best_epoch = enc, dec, epoch

    return result


# ---------------------------------------------------------------------------
# embedded-similarity helpers and subsampling

def chart_cosine_similarity(enc: EncoderParams, h_i, h_j) -> float:
    """Cosine similarity (modulus) of two encoded channels."""
    z_i, _ = encode(enc, h_i)
    z_j, _ = encode(enc, h_j)
    return float(_cosine(z_i, z_j))


def _cosine(z_i: np.ndarray, z_j: np.ndarray) -> float:
    ni, nj = np.linalg.norm(z_i), np.linalg.norm(z_j)
    if ni < 1e-12 or nj < 1e-12:
        raise ValueError("cosine similarity undefined for a near-zero embedding")
    return abs(float(np.dot(z_i, z_j))) / (ni * nj)


def embedding_similarity_matrix(embeddings: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(embeddings, axis=0)
    if np.any(norms < 1e-12):
        raise ValueError("cosine similarity undefined for a near-zero embedding")
    sims = np.abs(embeddings.T @ embeddings) / np.outer(norms, norms)
    return np.minimum(sims, 1.0)


def similarity_subsample_indices(embeddings: np.ndarray, keep: int,
                                 swap_probability: float, rng: np.random.Generator):
    """Greedy redundancy reduction over precomputed embeddings.

    Starts from the first ``keep`` columns; each remaining column may evict
    one member of the currently most-similar kept pair when it is less
    similar to the kept set than that pair is to itself. Returns the kept
    source indices and the trace of the max pairwise similarity after the
    start and after each accepted swap (non-increasing by construction).
    """
    n = embeddings.shape[1]
    if keep > n:
        raise ConfigError(f"keep_count {keep} exceeds the number of columns {n}")
    kept = list(range(keep))
    if keep >= n or keep < 2:
        return np.asarray(kept[:keep], dtype=int), []

    sims = embedding_similarity_matrix(embeddings)

    def max_pair():
        sub = sims[np.ix_(kept, kept)].copy()
        np.fill_diagonal(sub, -np.inf)
        a, b = np.unravel_index(np.argmax(sub), sub.shape)
        return (a, b) if a < b else (b, a)

    k_pos, l_pos = max_pair()
    trace = [sims[kept[k_pos], kept[l_pos]]]
    for i in range(keep, n):
        s = sims[i, kept].max()
        pair_sim = sims[kept[k_pos], kept[l_pos]]
        if s < pair_sim:
            r_pos = k_pos if rng.random() < swap_probability else l_pos
            kept[r_pos] = i
            k_pos, l_pos = max_pair()
            trace.append(sims[kept[k_pos], kept[l_pos]])
    return np.asarray(kept, dtype=int), trace


def subsample(Dmat: np.ndarray, Zmat: np.ndarray, enc: EncoderParams,
              config: SubsampleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Subsample calibration columns by embedded similarity; chart locations
    travel with their channels."""
    if Dmat.shape[1] != Zmat.shape[1]:
        raise ConfigError("Dmat and Zmat must have the same number of columns")
    embeddings, _ = encode_batch(enc, Dmat)
    rng = np.random.default_rng(config.rng_seed)
    idx, _ = similarity_subsample_indices(embeddings, config.keep_count,
                                          config.swap_probability, rng)
    return Dmat[:, idx].copy(), Zmat[:, idx].copy()


def subsample_encoder(enc: EncoderParams, config: SubsampleConfig) -> EncoderParams:
    Ds, Zs = subsample(enc.Dmat, enc.Zmat, enc, config)
    return replace(enc, Dmat=Ds, Zmat=Zs)
