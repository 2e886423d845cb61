"""File formats: dataset binary/JSON, model checkpoints, chart CSV/JSON.

Binary layouts are little-endian. Both binary formats share the same frame:

    magic (4 bytes) | u16 version | payload | u32 CRC-32 of payload

Datasets use magic ``CCDS``, checkpoints ``CCMD``. The dataset payload is a
scene/geometry header, a sample count, then per sample a split tag (u8),
the position (2 x f64) and the channel as interleaved (re, im) f64 pairs.
All writes go to a temp file in the target directory followed by an atomic
rename, so a failed command never leaves a partial output behind.
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from .datagen import SPLITS, ChannelSample, Dataset, Rect, SceneConfig
from .errors import ChecksumError, ConfigError, FormatError, TruncatedError, VersionError

DATASET_MAGIC = b"CCDS"
CHECKPOINT_MAGIC = b"CCMD"
FORMAT_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class _Reader:
    """Cursor over a byte payload that turns overruns into TruncatedError."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError("file ends before the declared payload is complete")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).copy()


def _frame(magic: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    return magic + struct.pack("<H", FORMAT_VERSION) + payload + struct.pack("<I", crc)


def _unframe(data: bytes, magic: bytes) -> bytes:
    if len(data) < 4 or data[:4] != magic:
        raise FormatError(f"bad magic bytes, expected {magic!r}")
    if len(data) < 6:
        raise TruncatedError("file ends inside the version field")
    (version,) = struct.unpack("<H", data[4:6])
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}, expected {FORMAT_VERSION}")
    if len(data) < 10:
        raise TruncatedError("file too short to hold a checksum")
    return data[6:-4]


def _check_crc(data: bytes, payload: bytes) -> None:
    (stored,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored:
        raise ChecksumError("payload CRC-32 mismatch")


# ---------------------------------------------------------------------------
# dataset binary format


def dataset_to_bytes(dataset: Dataset) -> bytes:
    cfg = dataset.scene
    parts = [struct.pack("<QQdd", dataset.antenna_count, cfg.subcarrier_count,
                         cfg.carrier_frequency, cfg.bandwidth),
             struct.pack("<dddd", cfg.area.x0, cfg.area.y0, cfg.area.x1, cfg.area.y1),
             struct.pack("<Qddq", cfg.scatterer_count,
                         cfg.bs_position[0], cfg.bs_position[1], cfg.rng_seed),
             struct.pack("<Q", len(dataset.samples))]
    for sample, tag in zip(dataset.samples, dataset.split_labels):
        parts.append(struct.pack("<Bdd", int(tag), sample.position[0], sample.position[1]))
        parts.append(np.ascontiguousarray(sample.h, dtype=np.complex128).tobytes())
    return _frame(DATASET_MAGIC, b"".join(parts))


def dataset_from_bytes(data: bytes) -> Dataset:
    payload = _unframe(data, DATASET_MAGIC)
    r = _Reader(payload)
    n_a, n_s, f_c, bandwidth = r.unpack("<QQdd")
    x0, y0, x1, y1 = r.unpack("<dddd")
    scat_count, bs_x, bs_y, seed = r.unpack("<Qddq")
    scene = SceneConfig(carrier_frequency=f_c, bandwidth=bandwidth, subcarrier_count=int(n_s),
                        area=Rect(x0, y0, x1, y1), scatterer_count=int(scat_count),
                        bs_position=(bs_x, bs_y), rng_seed=int(seed))
    (count,) = r.unpack("<Q")
    dim = int(n_a) * int(n_s)
    samples = []
    labels = np.empty(count, dtype=np.uint8)
    for i in range(count):
        tag, px, py = r.unpack("<Bdd")
        if tag >= len(SPLITS):
            raise FormatError(f"unknown split tag {tag}")
        h = r.array(np.complex128, dim)
        labels[i] = tag
        samples.append(ChannelSample.from_channel(h, (px, py), int(n_a)))
    if r.pos != len(payload):
        raise FormatError("trailing bytes after the last sample")
    _check_crc(data, payload)
    return Dataset(scene=scene, antenna_count=int(n_a), samples=samples, split_labels=labels)


def save_dataset(dataset: Dataset, path) -> None:
    atomic_write_bytes(path, dataset_to_bytes(dataset))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        head = f.read(4)
        rest = f.read()
    data = head + rest
    if head == DATASET_MAGIC:
        return dataset_from_bytes(data)
    if head[:1] == b"{":
        return dataset_from_json(data.decode("utf-8"))
    raise FormatError("not a dataset file (bad magic bytes)")


# JSON mirror for small hand-written fixtures

def dataset_to_json(dataset: Dataset) -> str:
    cfg = dataset.scene
    samples = []
    for sample, tag in zip(dataset.samples, dataset.split_labels):
        samples.append({
            "split": SPLITS[int(tag)],
            "position": [float(sample.position[0]), float(sample.position[1])],
            "h": [[float(c.real), float(c.imag)] for c in sample.h],
        })
    doc = {
        "format": "ccds-json",
        "version": FORMAT_VERSION,
        "antenna_count": dataset.antenna_count,
        "scene": {
            "carrier_frequency": cfg.carrier_frequency,
            "bandwidth": cfg.bandwidth,
            "subcarrier_count": cfg.subcarrier_count,
            "area": [cfg.area.x0, cfg.area.y0, cfg.area.x1, cfg.area.y1],
            "scatterer_count": cfg.scatterer_count,
            "bs_position": [cfg.bs_position[0], cfg.bs_position[1]],
            "rng_seed": cfg.rng_seed,
        },
        "samples": samples,
    }
    return json.dumps(doc, indent=1)


def dataset_from_json(text: str) -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON dataset: {exc}") from exc
    if doc.get("format") != "ccds-json":
        raise FormatError("not a JSON dataset (missing format marker)")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported JSON dataset version {doc.get('version')}")
    sc = doc["scene"]
    scene = SceneConfig(carrier_frequency=sc["carrier_frequency"], bandwidth=sc["bandwidth"],
                        subcarrier_count=sc["subcarrier_count"], area=Rect(*sc["area"]),
                        scatterer_count=sc["scatterer_count"],
                        bs_position=tuple(sc["bs_position"]), rng_seed=sc["rng_seed"])
    n_a = doc["antenna_count"]
    samples, labels = [], []
    for entry in doc["samples"]:
        h = np.array([complex(re, im) for re, im in entry["h"]], dtype=np.complex128)
        samples.append(ChannelSample.from_channel(h, entry["position"], n_a))
        labels.append(SPLIT_TAGS_INV[entry["split"]])
    return Dataset(scene=scene, antenna_count=n_a, samples=samples,
                   split_labels=np.asarray(labels, dtype=np.uint8))


SPLIT_TAGS_INV = {name: tag for tag, name in enumerate(SPLITS)}


# ---------------------------------------------------------------------------
# model checkpoints

_CHECKPOINT_TENSORS = ("Dmat", "Zmat", "B", "W1", "b1", "W2", "b2", "W3", "b3")


def checkpoint_to_bytes(enc, dec, target_subcarrier: int) -> bytes:
    d, n = enc.Zmat.shape
    dim = enc.Dmat.shape[0]
    f_count = dec.B.shape[0]
    t_width = dec.W1.shape[0]
    n_out = dec.W3.shape[0]
    parts = [struct.pack("<QQQQQQQd", d, f_count, t_width, n, dim, n_out,
                         target_subcarrier, enc.beta)]
    for name in _CHECKPOINT_TENSORS:
        arr = getattr(enc, name, None)
        if arr is None:
            arr = getattr(dec, name)
        parts.append(np.ascontiguousarray(arr).tobytes())
    return _frame(CHECKPOINT_MAGIC, b"".join(parts))


def checkpoint_from_bytes(data: bytes):
    from .model import DecoderParams, EncoderParams  # local import to avoid a cycle

    payload = _unframe(data, CHECKPOINT_MAGIC)
    r = _Reader(payload)
    d, f_count, t_width, n, dim, n_out, target_s, beta = r.unpack("<QQQQQQQd")
    d, f_count, t_width, n, dim, n_out = map(int, (d, f_count, t_width, n, dim, n_out))
    enc = EncoderParams(
        Dmat=r.array(np.complex128, dim * n).reshape(dim, n),
        Zmat=r.array(np.float64, d * n).reshape(d, n),
        beta=float(beta))
    dec = DecoderParams(
        B=r.array(np.float64, f_count * d).reshape(f_count, d),
        W1=r.array(np.complex128, t_width * f_count).reshape(t_width, f_count),
        b1=r.array(np.complex128, t_width),
        W2=r.array(np.complex128, t_width * t_width).reshape(t_width, t_width),
        b2=r.array(np.complex128, t_width),
        W3=r.array(np.complex128, n_out * t_width).reshape(n_out, t_width),
        b3=r.array(np.complex128, n_out))
    if r.pos != len(payload):
        raise FormatError("trailing bytes after the last tensor")
    _check_crc(data, payload)
    return enc, dec, int(target_s)


def save_checkpoint(enc, dec, target_subcarrier: int, path) -> None:
    atomic_write_bytes(path, checkpoint_to_bytes(enc, dec, target_subcarrier))


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] == CHECKPOINT_MAGIC:
        return checkpoint_from_bytes(data)
    if data[:1] == b"{":
        return checkpoint_from_json(data.decode("utf-8"))
    raise FormatError("not a checkpoint file (bad magic bytes)")


def _complex_pairs(arr: np.ndarray):
    return [[float(c.real), float(c.imag)] for c in np.asarray(arr).ravel()]


def checkpoint_to_json(enc, dec, target_subcarrier: int) -> str:
    doc = {
        "format": "ccmd-json",
        "version": FORMAT_VERSION,
        "target_subcarrier": target_subcarrier,
        "beta": enc.beta,
        "shapes": {"Dmat": list(enc.Dmat.shape), "Zmat": list(enc.Zmat.shape),
                   "B": list(dec.B.shape), "W1": list(dec.W1.shape), "b1": list(dec.b1.shape),
                   "W2": list(dec.W2.shape), "b2": list(dec.b2.shape),
                   "W3": list(dec.W3.shape), "b3": list(dec.b3.shape)},
        "Dmat": _complex_pairs(enc.Dmat),
        "Zmat": [float(v) for v in enc.Zmat.ravel()],
        "B": [float(v) for v in dec.B.ravel()],
        "W1": _complex_pairs(dec.W1), "b1": _complex_pairs(dec.b1),
        "W2": _complex_pairs(dec.W2), "b2": _complex_pairs(dec.b2),
        "W3": _complex_pairs(dec.W3), "b3": _complex_pairs(dec.b3),
    }
    return json.dumps(doc)


def checkpoint_from_json(text: str):
    from .model import DecoderParams, EncoderParams

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON checkpoint: {exc}") from exc
    if doc.get("format") != "ccmd-json":
        raise FormatError("not a JSON checkpoint (missing format marker)")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported JSON checkpoint version {doc.get('version')}")
    shapes = doc["shapes"]

    def cplx(name):
        flat = np.array([complex(re, im) for re, im in doc[name]], dtype=np.complex128)
        return flat.reshape(shapes[name])

    enc = EncoderParams(Dmat=cplx("Dmat"),
                        Zmat=np.array(doc["Zmat"], dtype=float).reshape(shapes["Zmat"]),
                        beta=float(doc["beta"]))
    dec = DecoderParams(B=np.array(doc["B"], dtype=float).reshape(shapes["B"]),
                        W1=cplx("W1"), b1=cplx("b1"), W2=cplx("W2"), b2=cplx("b2"),
                        W3=cplx("W3"), b3=cplx("b3"))
    return enc, dec, int(doc["target_subcarrier"])


# ---------------------------------------------------------------------------
# chart files

def chart_to_csv(Z: np.ndarray) -> str:
    d, n = Z.shape
    lines = ["index," + ",".join(f"z_{i + 1}" for i in range(d))]
    for j in range(n):
        lines.append(f"{j}," + ",".join(repr(float(Z[i, j])) for i in range(d)))
    return "\n".join(lines) + "\n"


def chart_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("index,"):
        raise FormatError("not a chart CSV (missing header)")
    d = len(lines[0].split(",")) - 1
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != d + 1:
            raise FormatError(f"chart CSV row has {len(cells)} cells, expected {d + 1}")
        rows.append([float(c) for c in cells[1:]])
    if not rows:
        raise FormatError("chart CSV has no data rows")
    return np.asarray(rows, dtype=float).T  # back to d x N


def save_chart_csv(Z: np.ndarray, path) -> None:
    atomic_write_text(path, chart_to_csv(Z))


def load_chart_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return chart_from_csv(f.read())


def chart_to_json(Z: np.ndarray) -> str:
    return json.dumps({"format": "chart-json", "version": FORMAT_VERSION,
                       "d": int(Z.shape[0]),
                       "locations": [[float(v) for v in col] for col in Z.T]})


def chart_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    if doc.get("format") != "chart-json":
        raise FormatError("not a JSON chart (missing format marker)")
    locations = np.asarray(doc["locations"], dtype=float)
    if locations.ndim != 2 or locations.shape[1] != doc["d"]:
        raise FormatError("chart locations do not match the declared dimension")
    return locations.T


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")
