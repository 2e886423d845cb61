import numpy as np
import pytest

from chartcomp.charting import phase_insensitive_distance
from chartcomp.datagen import (ArrayGeometry, Path, Rect, SceneConfig, SplitCounts,
                               build_scene, channel_from_paths, generate_dataset,
                               grid_shape, synth_channel)
from chartcomp.errors import ConfigError
from chartcomp.storage import dataset_to_bytes

from conftest import small_scene_config


def one_subcarrier_config(**kw):
    return small_scene_config(subcarriers=kw.pop("subcarriers", 1), **kw)


class TestBuildScene:
    def test_no_scatterers_leaves_los_only(self):
        scene = build_scene(small_scene_config(scatterers=0))
        assert scene.scatterer_positions.shape == (0, 2)
        assert len(scene.scatterer_phases) == 0

    def test_same_seed_same_scene(self):
        a = build_scene(small_scene_config(seed=3))
        b = build_scene(small_scene_config(seed=3))
        assert np.array_equal(a.scatterer_positions, b.scatterer_positions)
        assert np.array_equal(a.scatterer_phases, b.scatterer_phases)

    def test_different_seeds_differ(self):
        a = build_scene(small_scene_config(seed=1))
        b = build_scene(small_scene_config(seed=2))
        assert not np.allclose(a.scatterer_positions, b.scatterer_positions)

    def test_scatterers_inside_area(self):
        cfg = small_scene_config(scatterers=200)
        scene = build_scene(cfg)
        assert all(cfg.area.contains(p) for p in scene.scatterer_positions)

    def test_zero_area_rejected(self):
        with pytest.raises(ConfigError):
            SceneConfig(carrier_frequency=3e7, bandwidth=2e7, subcarrier_count=4,
                        area=Rect(0, 0, 0, 10), scatterer_count=0,
                        bs_position=(-1, 0), rng_seed=0)


class TestChannelFromPaths:
    def test_broadside_path_has_constant_phase(self):
        cfg = one_subcarrier_config()
        geom = ArrayGeometry(antenna_count=2)
        h = channel_from_paths([Path(1.0, 0.0, 0.0)], geom, cfg)
        assert np.allclose(h, [1.0, 1.0])

    def test_endfire_path_alternates_sign(self):
        cfg = one_subcarrier_config()
        geom = ArrayGeometry(antenna_count=2, element_spacing=0.5)
        h = channel_from_paths([Path(1.0, 0.0, np.pi / 2)], geom, cfg)
        assert np.allclose(h, [1.0, -1.0])

    def test_single_path_norm(self):
        cfg = small_scene_config(subcarriers=5)
        geom = ArrayGeometry(antenna_count=7)
        gain = 0.3 - 0.4j
        h = channel_from_paths([Path(gain, 2.1e-7, 0.8)], geom, cfg)
        assert np.isclose(np.linalg.norm(h), abs(gain) * np.sqrt(7 * 5))

    def test_matches_direct_formula(self):
        cfg = small_scene_config(subcarriers=3)
        geom = ArrayGeometry(antenna_count=4, element_spacing=0.4)
        paths = [Path(0.5 + 0.1j, 1e-7, 0.3), Path(-0.2j, 3e-7, -1.1)]
        h = channel_from_paths(paths, geom, cfg)
        expected = np.zeros(12, dtype=complex)
        for p in paths:
            for s in range(3):
                f_s = cfg.carrier_frequency - cfg.bandwidth / 2 + s * cfg.bandwidth / 3
                for a in range(4):
                    expected[a + 4 * s] += (p.complex_gain
                                            * np.exp(-2j * np.pi * f_s * p.delay)
                                            * np.exp(1j * np.pi * 0.8 * a * np.sin(p.angle_of_departure)))
        assert np.allclose(h, expected)


class TestSynthChannel:
    def test_sample_fields(self):
        cfg = small_scene_config()
        scene = build_scene(cfg)
        geom = ArrayGeometry(antenna_count=4)
        s = synth_channel(scene, geom, (5.0, 5.0))
        assert s.h.shape == (4 * cfg.subcarrier_count,)
        assert np.isclose(s.full_norm, np.linalg.norm(s.h), rtol=1e-10)
        for sc in range(cfg.subcarrier_count):
            block = s.h[sc * 4:(sc + 1) * 4]
            assert np.isclose(s.subcarrier_norms[sc], np.linalg.norm(block), rtol=1e-10)

    def test_deterministic(self):
        scene = build_scene(small_scene_config())
        geom = ArrayGeometry(antenna_count=4)
        a = synth_channel(scene, geom, (3.0, 4.0))
        b = synth_channel(scene, geom, (3.0, 4.0))
        assert np.array_equal(a.h, b.h)

    def test_ue_on_bs_rejected(self):
        cfg = SceneConfig(carrier_frequency=3e7, bandwidth=2e7, subcarrier_count=2,
                          area=Rect(0, 0, 10, 10), scatterer_count=0,
                          bs_position=(5.0, 5.0), rng_seed=0)
        scene = build_scene(cfg)
        with pytest.raises(ConfigError):
            synth_channel(scene, ArrayGeometry(antenna_count=2), (5.0, 5.0))

    def test_ue_outside_area_rejected(self):
        scene = build_scene(small_scene_config())
        with pytest.raises(ConfigError):
            synth_channel(scene, ArrayGeometry(antenna_count=2), (100.0, 0.0))

    def test_phase_coherence(self):
        # rotating every path gain rotates the channel globally, so the
        # phase-insensitive distance to the original is zero
        from chartcomp.datagen import propagation_paths
        cfg = small_scene_config(scatterers=5)
        scene = build_scene(cfg)
        geom = ArrayGeometry(antenna_count=4)
        paths = propagation_paths(scene, (7.0, 3.0))
        h = channel_from_paths(paths, geom, cfg)
        phi = 1.234
        rotated = [Path(p.complex_gain * np.exp(1j * phi), p.delay, p.angle_of_departure)
                   for p in paths]
        h_rot = channel_from_paths(rotated, geom, cfg)
        assert np.allclose(h_rot, h * np.exp(1j * phi))
        assert phase_insensitive_distance(h, h_rot) < 1e-10

    def test_continuity_in_position(self):
        scene = build_scene(small_scene_config(scatterers=0))
        geom = ArrayGeometry(antenna_count=8)
        base = np.array([10.0, 10.0])
        direction = np.array([1.0, 0.0])
        h0 = synth_channel(scene, geom, base).h
        diffs = []
        for eps in (1.0, 0.1, 0.01):
            h1 = synth_channel(scene, geom, base + eps * direction).h
            c = np.vdot(h1, h0)
            aligned = h1 * (c / abs(c))
            diffs.append(np.linalg.norm(h0 - aligned) / np.linalg.norm(h0))
        assert diffs[0] > diffs[1] > diffs[2]


class TestGenerateDataset:
    def test_grid_2x2_hits_corners(self):
        cfg = SceneConfig(carrier_frequency=3e7, bandwidth=2e7, subcarrier_count=2,
                          area=Rect(0, 0, 1, 1), scatterer_count=0,
                          bs_position=(-5.0, 0.5), rng_seed=1)
        ds = generate_dataset(build_scene(cfg), ArrayGeometry(antenna_count=2),
                              SplitCounts(4), placement="grid")
        got = {tuple(s.position) for s in ds.samples}
        assert got == {(0, 0), (1, 0), (0, 1), (1, 1)}

    def test_grid_rejects_prime_counts(self):
        with pytest.raises(ConfigError):
            grid_shape(7)
        with pytest.raises(ConfigError):
            grid_shape(1)
        assert grid_shape(500) == (20, 25)

    def test_uniform_counts_partition(self):
        scene = build_scene(small_scene_config())
        ds = generate_dataset(scene, ArrayGeometry(antenna_count=4),
                              SplitCounts(50, 100, 50), placement="uniform")
        assert len(ds.samples) == 200
        sizes = [ds.split_size(s) for s in ("calibration", "train", "test")]
        assert sizes == [50, 100, 50]
        assert sum(sizes) == len(ds.samples)

    def test_fixed_seed_byte_identical(self):
        def make():
            scene = build_scene(small_scene_config(seed=23))
            return generate_dataset(scene, ArrayGeometry(antenna_count=4),
                                    SplitCounts(10, 10, 10), placement="uniform")
        assert dataset_to_bytes(make()) == dataset_to_bytes(make())

    def test_calibration_required(self):
        with pytest.raises(ConfigError):
            SplitCounts(0, 10, 10)

    def test_channel_matrix_layout(self):
        scene = build_scene(small_scene_config())
        ds = generate_dataset(scene, ArrayGeometry(antenna_count=4),
                              SplitCounts(5, 3, 2), placement="uniform")
        H = ds.channel_matrix("train")
        idx = ds.indices("train")
        assert H.shape == (ds.dim, 3)
        assert np.array_equal(H[:, 1], ds.samples[idx[1]].h)
        T = ds.target_blocks("train", 2)
        assert np.array_equal(T[:, 0], ds.samples[idx[0]].h[8:12])
