import numpy as np
import pytest

from chartcomp.datagen import ArrayGeometry, SplitCounts, build_scene, generate_dataset
from chartcomp.errors import ChecksumError, FormatError, TruncatedError, VersionError
from chartcomp.storage import (chart_from_csv, chart_from_json, chart_to_csv, chart_to_json,
                               checkpoint_from_json, checkpoint_to_json, dataset_from_json,
                               dataset_to_json, load_checkpoint, load_dataset, load_chart_csv,
                               save_chart_csv, save_checkpoint, save_dataset)

from conftest import small_scene_config, tiny_model


@pytest.fixture()
def dataset():
    scene = build_scene(small_scene_config(seed=5, scatterers=3, subcarriers=4))
    return generate_dataset(scene, ArrayGeometry(antenna_count=4),
                            SplitCounts(6, 4, 3), placement="uniform")


def assert_datasets_equal(a, b):
    assert a.scene == b.scene
    assert a.antenna_count == b.antenna_count
    assert np.array_equal(a.split_labels, b.split_labels)
    assert len(a.samples) == len(b.samples)
    for sa, sb in zip(a.samples, b.samples):
        assert np.array_equal(sa.h, sb.h)
        assert np.array_equal(sa.position, sb.position)
        assert sa.full_norm == sb.full_norm
        assert np.array_equal(sa.subcarrier_norms, sb.subcarrier_norms)


class TestDatasetBinary:
    def test_round_trip(self, dataset, tmp_path):
        path = tmp_path / "d.ccds"
        save_dataset(dataset, path)
        assert_datasets_equal(dataset, load_dataset(path))

    def test_wrong_magic(self, dataset, tmp_path):
        path = tmp_path / "d.ccds"
        save_dataset(dataset, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_version_mismatch(self, dataset, tmp_path):
        path = tmp_path / "d.ccds"
        save_dataset(dataset, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            load_dataset(path)

    def test_truncation(self, dataset, tmp_path):
        path = tmp_path / "d.ccds"
        save_dataset(dataset, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(TruncatedError):
            load_dataset(path)

    def test_checksum(self, dataset, tmp_path):
        path = tmp_path / "d.ccds"
        save_dataset(dataset, path)
        raw = bytearray(path.read_bytes())
        raw[-20] ^= 0xFF  # flip payload bits near the tail
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            load_dataset(path)

    def test_no_partial_file_left(self, dataset, tmp_path):
        save_dataset(dataset, tmp_path / "ok.ccds")
        leftovers = [p for p in tmp_path.iterdir() if "tmp" in p.name]
        assert leftovers == []


class TestDatasetJson:
    def test_round_trip(self, dataset):
        assert_datasets_equal(dataset, dataset_from_json(dataset_to_json(dataset)))

    def test_load_detects_json(self, dataset, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(dataset_to_json(dataset))
        assert_datasets_equal(dataset, load_dataset(path))

    def test_bad_marker(self):
        with pytest.raises(FormatError):
            dataset_from_json('{"format": "other"}')


class TestCheckpoint:
    def test_binary_round_trip(self, tmp_path):
        enc, dec, _, _ = tiny_model(0)
        path = tmp_path / "m.ccmd"
        save_checkpoint(enc, dec, 3, path)
        enc2, dec2, target = load_checkpoint(path)
        assert target == 3
        assert np.array_equal(enc.Dmat, enc2.Dmat)
        assert np.array_equal(enc.Zmat, enc2.Zmat)
        assert enc.beta == enc2.beta
        for name in ("B", "W1", "b1", "W2", "b2", "W3", "b3"):
            assert np.array_equal(getattr(dec, name), getattr(dec2, name))

    def test_json_round_trip(self):
        enc, dec, _, _ = tiny_model(1)
        enc2, dec2, target = checkpoint_from_json(checkpoint_to_json(enc, dec, 1))
        assert target == 1
        assert np.allclose(enc.Dmat, enc2.Dmat)
        assert np.allclose(dec.W2, dec2.W2)

    def test_corrupt_checkpoint(self, tmp_path):
        enc, dec, _, _ = tiny_model(2)
        path = tmp_path / "m.ccmd"
        save_checkpoint(enc, dec, 0, path)
        raw = bytearray(path.read_bytes())
        raw[100] ^= 0x01  # inside the calibration tensor, past the header
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            load_checkpoint(path)


class TestChartFiles:
    def test_csv_round_trip(self, tmp_path):
        Z = np.random.default_rng(0).normal(size=(2, 7))
        path = tmp_path / "c.csv"
        save_chart_csv(Z, path)
        assert np.allclose(load_chart_csv(path), Z)
        header = path.read_text().splitlines()[0]
        assert header == "index,z_1,z_2"

    def test_csv_is_exact(self):
        Z = np.random.default_rng(1).normal(size=(3, 5))
        assert np.array_equal(chart_from_csv(chart_to_csv(Z)), Z)

    def test_json_round_trip(self):
        Z = np.random.default_rng(2).normal(size=(2, 4))
        assert np.allclose(chart_from_json(chart_to_json(Z)), Z)

    def test_bad_header(self):
        with pytest.raises(FormatError):
            chart_from_csv("a,b\n1,2\n")
