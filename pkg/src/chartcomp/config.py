"""Declarative run configuration for the CLI.

One JSON file drives the whole pipeline; sections mirror the library's
config dataclasses. A command only needs the sections it uses (a
generate-only config can omit model/train/eval), but every section that is
present must carry its explicit seed: no command ever draws from implicit
entropy, and a missing seed is rejected up front with the offending field
name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .datagen import ArrayGeometry, Rect, SceneConfig, SplitCounts
from .errors import ConfigError
from .model import ModelConfig
from .training import SubsampleConfig, TrainConfig

DEFAULT_SNR_GRID_DB = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class EvalConfig:
    K: int
    snr_grid_db: tuple[float, ...]
    group_seed: int

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("eval.K must be >= 1")
        if len(self.snr_grid_db) < 1:
            raise ConfigError("eval.snr_grid_db must be nonempty")


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig
    geometry: ArrayGeometry
    counts: SplitCounts
    placement: str
    chart_k: int
    model: ModelConfig | None
    train: TrainConfig | None
    subsample: SubsampleConfig | None
    eval: EvalConfig | None

    def require(self, section: str):
        value = getattr(self, section)
        if value is None:
            raise ConfigError(f"missing required config section '{section}'")
        return value


def _section(doc: dict, name: str, required: bool = False) -> dict | None:
    if name not in doc:
        if required:
            raise ConfigError(f"missing required config section '{name}'")
        return None
    value = doc[name]
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    return value


def _require(section: dict, path: str, name: str):
    if name not in section:
        raise ConfigError(f"missing required config field {path}.{name}")
    return section[name]


def _seed(section: dict, path: str, name: str = "rng_seed") -> int:
    value = _require(section, path, name)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"config field {path}.{name} must be an integer seed")
    return value


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_run_config(doc)


def parse_run_config(doc: dict) -> RunConfig:
    scene_doc = _section(doc, "scene", required=True)
    area = _require(scene_doc, "scene", "area")
    if not (isinstance(area, list) and len(area) == 4):
        raise ConfigError("scene.area must be [x0, y0, x1, y1]")
    bs = _require(scene_doc, "scene", "bs_position")
    scene = SceneConfig(
        carrier_frequency=float(_require(scene_doc, "scene", "carrier_frequency")),
        bandwidth=float(_require(scene_doc, "scene", "bandwidth")),
        subcarrier_count=int(_require(scene_doc, "scene", "subcarrier_count")),
        area=Rect(*[float(v) for v in area]),
        scatterer_count=int(scene_doc.get("scatterer_count", 0)),
        bs_position=(float(bs[0]), float(bs[1])),
        rng_seed=_seed(scene_doc, "scene"))

    geom_doc = _section(doc, "geometry", required=True)
    geometry = ArrayGeometry(
        antenna_count=int(_require(geom_doc, "geometry", "antenna_count")),
        element_spacing=float(geom_doc.get("element_spacing", 0.5)))

    data_doc = _section(doc, "data", required=True)
    counts_doc = _require(data_doc, "data", "counts")
    counts = SplitCounts(calibration=int(_require(counts_doc, "data.counts", "calibration")),
                         train=int(counts_doc.get("train", 0)),
                         test=int(counts_doc.get("test", 0)))
    placement = data_doc.get("placement", "uniform")
    if placement not in ("uniform", "grid"):
        raise ConfigError("data.placement must be 'uniform' or 'grid'")

    chart_doc = _section(doc, "charting") or {}
    chart_k = int(chart_doc.get("k", 10))

    model_doc = _section(doc, "model")
    model = None
    if model_doc is not None:
        model = ModelConfig(
            d=int(model_doc.get("d", 2)),
            F=int(model_doc.get("F", 200)),
            T=int(model_doc.get("T", 128)),
            sigma_B=float(model_doc.get("sigma_B", 1.0)),
            target_subcarrier=int(model_doc.get("target_subcarrier",
                                                scene.subcarrier_count // 2)),
            rng_seed=_seed(model_doc, "model"))
        if model.target_subcarrier >= scene.subcarrier_count:
            raise ConfigError("model.target_subcarrier must be < scene.subcarrier_count")
        if "d" in chart_doc and int(chart_doc["d"]) != model.d:
            raise ConfigError("charting.d and model.d disagree")

    train_doc = _section(doc, "train")
    train = None
    if train_doc is not None:
        train = TrainConfig(
            learning_rate=float(train_doc.get("learning_rate", 1e-3)),
            adam_beta1=float(train_doc.get("adam_beta1", 0.9)),
            adam_beta2=float(train_doc.get("adam_beta2", 0.999)),
            adam_epsilon=float(train_doc.get("adam_epsilon", 1e-8)),
            batch_size=int(train_doc.get("batch_size", 64)),
            epochs=int(train_doc.get("epochs", 100)),
            rng_seed=_seed(train_doc, "train"),
            patience=int(train_doc.get("patience", 20)),
            val_fraction=float(train_doc.get("val_fraction", 0.1)),
            freeze_encoder=bool(train_doc.get("freeze_encoder", False)))

    sub_doc = _section(doc, "subsample")
    subsample = None
    if sub_doc is not None:
        subsample = SubsampleConfig(
            keep_count=int(_require(sub_doc, "subsample", "keep_count")),
            swap_probability=float(sub_doc.get("swap_probability", 0.5)),
            rng_seed=_seed(sub_doc, "subsample"))

    eval_doc = _section(doc, "eval")
    eval_cfg = None
    if eval_doc is not None:
        eval_cfg = EvalConfig(K=int(eval_doc.get("K", 4)),
                              snr_grid_db=tuple(float(v) for v in
                                                eval_doc.get("snr_grid_db",
                                                             DEFAULT_SNR_GRID_DB)),
                              group_seed=_seed(eval_doc, "eval", "group_seed"))

    return RunConfig(scene=scene, geometry=geometry, counts=counts, placement=placement,
                     chart_k=chart_k, model=model, train=train, subsample=subsample,
                     eval=eval_cfg)
