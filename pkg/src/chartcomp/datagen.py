"""Synthetic multipath MIMO-OFDM channel datasets with ground-truth positions.

The propagation model is geometric: a line-of-sight path is always present
and each scatterer contributes one single-bounce path whose gain decays with
the total travelled distance. Scatterer positions and phases are drawn once
per scene, so the position-to-channel map is a pure, deterministic function
and the dataset inherits the smooth location-to-channel structure that the
charting encoder relies on.

Vectorization convention: the channel vector has length D = N_a * N_s laid
out antenna-major, i.e. entry ``a + N_a * s`` is antenna ``a`` on
subcarrier ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0

SPLITS = ("calibration", "train", "test")
SPLIT_TAGS = {name: tag for tag, name in enumerate(SPLITS)}


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array at the base station."""

    antenna_count: int
    element_spacing: float = 0.5  # in carrier wavelengths

    def __post_init__(self):
        if self.antenna_count < 1:
            raise ConfigError("antenna_count must be >= 1")
        if self.element_spacing <= 0:
            raise ConfigError("element_spacing must be > 0")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def contains(self, p) -> bool:
        x, y = float(p[0]), float(p[1])
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class SceneConfig:
    carrier_frequency: float  # Hz
    bandwidth: float          # Hz
    subcarrier_count: int
    area: Rect
    scatterer_count: int
    bs_position: tuple[float, float]
    rng_seed: int

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ConfigError("carrier_frequency must be > 0")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be > 0")
        if self.subcarrier_count < 1:
            raise ConfigError("subcarrier_count must be >= 1")
        if self.area.width <= 0 or self.area.height <= 0:
            raise ConfigError("area must have positive width and height")
        if self.scatterer_count < 0:
            raise ConfigError("scatterer_count must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def subcarrier_frequencies(self) -> np.ndarray:
        """Absolute frequency of each subcarrier, f_s = f_c - B/2 + s*B/N_s."""
        s = np.arange(self.subcarrier_count)
        return self.carrier_frequency - self.bandwidth / 2 + s * self.bandwidth / self.subcarrier_count


@dataclass(frozen=True)
class Path:
    """One propagation path seen from the base station array."""

    complex_gain: complex
    delay: float               # seconds
    angle_of_departure: float  # radians

    def __post_init__(self):
        if self.delay < 0:
            raise ConfigError("path delay must be >= 0")


@dataclass(frozen=True)
class Scene:
    """A frozen propagation environment: config plus drawn scatterers."""

    config: SceneConfig
    scatterer_positions: np.ndarray  # (S, 2)
    scatterer_phases: np.ndarray     # (S,)


def build_scene(config: SceneConfig) -> Scene:
    """Draw scatterer positions (uniform in the area) and their bounce phases.

    Deterministic for a fixed ``config.rng_seed``; positions and phases are
    drawn once per scene so channel synthesis stays a pure function.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(0,)))
    n = config.scatterer_count
    a = config.area
    xs = rng.uniform(a.x0, a.x1, size=n)
    ys = rng.uniform(a.y0, a.y1, size=n)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    positions = np.column_stack([xs, ys]) if n else np.zeros((0, 2))
    return Scene(config=config, scatterer_positions=positions, scatterer_phases=phases)


def propagation_paths(scene: Scene, ue_position) -> list[Path]:
    """Line-of-sight path plus one single-bounce path per scatterer."""
    cfg = scene.config
    ue = np.asarray(ue_position, dtype=float)
    bs = np.asarray(cfg.bs_position, dtype=float)
    lam = cfg.wavelength

    d_los = float(np.hypot(*(ue - bs)))
    if d_los == 0.0:
        raise ConfigError("UE position coincides with the BS position")
    theta_los = float(np.arctan2(ue[1] - bs[1], ue[0] - bs[0]))
    paths = [Path(complex_gain=lam / (4.0 * np.pi * d_los),
                  delay=d_los / SPEED_OF_LIGHT,
                  angle_of_departure=theta_los)]

    for pos, phase in zip(scene.scatterer_positions, scene.scatterer_phases):
        d1 = float(np.hypot(*(pos - bs)))
        d2 = float(np.hypot(*(ue - pos)))
        total = d1 + d2
        if total == 0.0:
            continue
        gain = lam / (4.0 * np.pi * total) * np.exp(1j * phase)
        theta = float(np.arctan2(pos[1] - bs[1], pos[0] - bs[0]))
        paths.append(Path(complex_gain=complex(gain), delay=total / SPEED_OF_LIGHT,
                          angle_of_departure=theta))
    return paths


def channel_from_paths(paths: list[Path], geometry: ArrayGeometry, config: SceneConfig) -> np.ndarray:
    """Evaluate h[a + N_a*s] = sum_p c_p exp(-2j pi f_s tau_p) exp(j pi (2 spacing) a sin(theta_p))."""
    n_a = geometry.antenna_count
    freqs = config.subcarrier_frequencies()          # (N_s,)
    ant = np.arange(n_a)                             # (N_a,)
    h = np.zeros((config.subcarrier_count, n_a), dtype=np.complex128)
    for p in paths:
        delay_phase = np.exp(-2j * np.pi * freqs * p.delay)                    # (N_s,)
        steering = np.exp(1j * np.pi * (2.0 * geometry.element_spacing) * ant
                          * np.sin(p.angle_of_departure))                      # (N_a,)
        h += p.complex_gain * delay_phase[:, None] * steering[None, :]
    return h.reshape(-1)  # antenna-major: a + N_a * s


@dataclass(frozen=True)
class ChannelSample:
    """One channel snapshot with its ground-truth UE position."""

    h: np.ndarray                 # complex, length N_a * N_s
    position: np.ndarray          # (2,) meters
    full_norm: float
    subcarrier_norms: np.ndarray  # (N_s,)

    @classmethod
    def from_channel(cls, h: np.ndarray, position, antenna_count: int) -> "ChannelSample":
        h = np.asarray(h, dtype=np.complex128)
        if h.size % antenna_count != 0:
            raise ConfigError("channel length is not a multiple of antenna_count")
        blocks = h.reshape(-1, antenna_count)
        return cls(h=h,
                   position=np.asarray(position, dtype=float),
                   full_norm=float(np.linalg.norm(h)),
                   subcarrier_norms=np.linalg.norm(blocks, axis=1))

    def subcarrier_block(self, s: int, antenna_count: int) -> np.ndarray:
        return self.h[s * antenna_count:(s + 1) * antenna_count]


def synth_channel(scene: Scene, geometry: ArrayGeometry, ue_position) -> ChannelSample:
    """Synthesize the channel sample observed at ``ue_position``.

    Pure and deterministic given the scene; rejects a UE on top of the BS
    (the line-of-sight gain would be singular).
    """
    ue = np.asarray(ue_position, dtype=float)
    if not scene.config.area.contains(ue):
        raise ConfigError(f"UE position {tuple(ue)} outside the scene area")
    paths = propagation_paths(scene, ue)
    h = channel_from_paths(paths, geometry, scene.config)
    return ChannelSample.from_channel(h, ue, geometry.antenna_count)


@dataclass(frozen=True)
class SplitCounts:
    calibration: int
    train: int = 0
    test: int = 0

    def __post_init__(self):
        if self.calibration < 1:
            raise ConfigError("calibration count must be >= 1")
        if self.train < 0 or self.test < 0:
            raise ConfigError("split counts must be >= 0")

    def as_dict(self) -> dict[str, int]:
        return {"calibration": self.calibration, "train": self.train, "test": self.test}


@dataclass
class Dataset:
    """Immutable-by-convention container of samples with split labels."""

    scene: SceneConfig
    antenna_count: int
    samples: list[ChannelSample]
    split_labels: np.ndarray = field(repr=False)  # uint8 tags, see SPLIT_TAGS

    def __post_init__(self):
        if len(self.samples) != len(self.split_labels):
            raise ConfigError("split labels must cover every sample")

    @property
    def dim(self) -> int:
        return self.antenna_count * self.scene.subcarrier_count

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split_labels == SPLIT_TAGS[split])

    def split_size(self, split: str) -> int:
        return int(np.count_nonzero(self.split_labels == SPLIT_TAGS[split]))

    def channel_matrix(self, split: str) -> np.ndarray:
        """Channels of one split as a D x n complex matrix (column-per-sample)."""
        idx = self.indices(split)
        out = np.empty((self.dim, idx.size), dtype=np.complex128)
        for col, i in enumerate(idx):
            out[:, col] = self.samples[i].h
        return out

    def positions(self, split: str) -> np.ndarray:
        idx = self.indices(split)
        return np.array([self.samples[i].position for i in idx], dtype=float).reshape(idx.size, 2)

    def target_blocks(self, split: str, subcarrier: int) -> np.ndarray:
        """Per-subcarrier channel blocks as an N_a x n complex matrix."""
        idx = self.indices(split)
        n_a = self.antenna_count
        out = np.empty((n_a, idx.size), dtype=np.complex128)
        for col, i in enumerate(idx):
            out[:, col] = self.samples[i].subcarrier_block(subcarrier, n_a)
        return out


def grid_shape(count: int) -> tuple[int, int]:
    """Most-square rows x cols factorization of ``count`` with both sides >= 2."""
    if count >= 4:
        for r in range(int(np.sqrt(count)), 1, -1):
            if count % r == 0:
                return r, count // r
    raise ConfigError(f"count {count} is not expressible as a rows x cols grid")


def _grid_positions(count: int, area: Rect) -> np.ndarray:
    r, c = grid_shape(count)
    # put the longer grid side along the longer area side
    cols, rows = (c, r) if area.width >= area.height else (r, c)
    xs = np.linspace(area.x0, area.x1, cols)
    ys = np.linspace(area.y0, area.y1, rows)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def generate_dataset(scene: Scene, geometry: ArrayGeometry, counts: SplitCounts,
                     placement: str = "uniform") -> Dataset:
    """Synthesize channels for all splits, in calibration/train/test order.

    ``placement="grid"`` puts each split's UEs on a regular grid spanning the
    area (counts must factor into a proper grid); ``"uniform"`` draws them
    uniformly at random, deterministically from the scene seed.
    """
    if placement not in ("grid", "uniform"):
        raise ConfigError(f"unknown placement {placement!r}")
    area = scene.config.area
    rng = np.random.default_rng(np.random.SeedSequence(scene.config.rng_seed, spawn_key=(1,)))

    samples: list[ChannelSample] = []
    labels: list[int] = []
    for split in SPLITS:
        n = counts.as_dict()[split]
        if n == 0:
            continue
        if placement == "grid":
            positions = _grid_positions(n, area)
        else:
            positions = np.column_stack([rng.uniform(area.x0, area.x1, size=n),
                                         rng.uniform(area.y0, area.y1, size=n)])
        for pos in positions:
            samples.append(synth_channel(scene, geometry, pos))
            labels.append(SPLIT_TAGS[split])

    return Dataset(scene=scene.config, antenna_count=geometry.antenna_count,
                   samples=samples, split_labels=np.asarray(labels, dtype=np.uint8))
