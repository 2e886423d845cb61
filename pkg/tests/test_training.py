import numpy as np
import pytest

from chartcomp.errors import ConfigError
from chartcomp.evaluate import rho_values
from chartcomp.model import DecoderParams, EncoderParams
from chartcomp.training import (AdamState, TrainConfig, adam_step, backward,
                                chart_cosine_similarity, encoder_scalar_count,
                                flatten_grads, flatten_params, loss_batch, train,
                                unflatten_params)

from conftest import random_channels, tiny_model


def constant_decoder(output, d=2):
    """Decoder whose raw output is the given vector for every location."""
    n_out = len(output)
    t_width = 2
    zc = np.zeros((t_width, t_width), dtype=complex)
    zv = np.zeros(t_width, dtype=complex)
    return DecoderParams(B=np.zeros((1, d)), W1=np.zeros((t_width, 1), dtype=complex),
                         b1=zv, W2=zc, b2=zv,
                         W3=np.zeros((n_out, t_width), dtype=complex),
                         b3=np.asarray(output, dtype=complex))


def basis_encoder(dim, n=3, d=2):
    rng = np.random.default_rng(0)
    return EncoderParams(Dmat=np.eye(dim, n, dtype=complex),
                         Zmat=rng.normal(size=(d, n)), beta=1.0)


class TestLossBatch:
    def test_aligned_precoder_gives_exact_zero(self):
        # output e1 against target 2*e1: every quantity is a power of two,
        # so the loss is exactly 0
        dec = constant_decoder([1.0, 0.0, 0.0, 0.0])
        enc = basis_encoder(4)
        target = np.array([[2.0], [0.0], [0.0], [0.0]], dtype=complex)
        H = np.asarray(target)
        assert loss_batch(enc, dec, H, target) == 0.0

    def test_orthogonal_precoder_gives_one(self):
        dec = constant_decoder([0.0, 1.0, 0.0, 0.0])
        enc = basis_encoder(4)
        target = np.array([[2.0], [0.0], [0.0], [0.0]], dtype=complex)
        assert loss_batch(enc, dec, np.asarray(target), target) == 1.0

    def test_half_and_half_averages(self):
        dec = constant_decoder([1.0, 0.0])
        enc = basis_encoder(2, n=2)
        H = np.array([[2.0, 0.0], [0.0, 2.0]], dtype=complex)
        assert loss_batch(enc, dec, H, H) == 0.5

    def test_bounds_on_random_models(self):
        for seed in range(10):
            enc, dec, H, T = tiny_model(seed)
            loss = loss_batch(enc, dec, H, T)
            assert 0.0 <= loss <= 1.0

    def test_phase_invariance_per_sample(self):
        enc, dec, H, T = tiny_model(30)
        base = loss_batch(enc, dec, H, T)
        phi = np.exp(0.9j)
        assert abs(loss_batch(enc, dec, H * phi, T * phi) - base) < 1e-12

    def test_zero_target_rejected(self):
        enc, dec, H, T = tiny_model(31)
        T = T.copy()
        T[:, 0] = 0.0
        with pytest.raises(ValueError):
            loss_batch(enc, dec, H, T)

    def test_empty_batch_rejected(self):
        enc, dec, H, T = tiny_model(32)
        with pytest.raises(ConfigError):
            loss_batch(enc, dec, H[:, :0], T[:, :0])


def finite_difference_gradient(enc, dec, H, T, eps=1e-6):
    flat = flatten_params(enc, dec)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        fp, fm = flat.copy(), flat.copy()
        fp[i] += eps
        fm[i] -= eps
        ep, dp = unflatten_params(fp, enc, dec)
        em, dm = unflatten_params(fm, enc, dec)
        grad[i] = (loss_batch(ep, dp, H, T) - loss_batch(em, dm, H, T)) / (2 * eps)
    return grad


def assert_gradients_match(analytic, fd, rtol=1e-5, atol=1e-8):
    err = np.abs(analytic - fd)
    ok = (err <= atol) | (err <= rtol * np.maximum(np.abs(analytic), np.abs(fd)))
    assert np.all(ok), f"worst abs err {err.max():.3e} at {err.argmax()}"


class TestBackward:
    def test_matches_finite_differences(self):
        for seed in (100, 101, 102):
            enc, dec, H, T = tiny_model(seed)
            loss, grads = backward(enc, dec, H, T)
            assert np.isclose(loss, loss_batch(enc, dec, H, T))
            assert_gradients_match(flatten_grads(grads),
                                   finite_difference_gradient(enc, dec, H, T))

    def test_zero_sigma_frequency_gradient(self):
        # B frozen at exactly 0: only the sin path moves, and the analytic
        # frequency-matrix gradient must still match finite differences
        enc, dec, H, T = tiny_model(103, sigma_B=0.0)
        assert np.all(dec.B == 0.0)
        _, grads = backward(enc, dec, H, T)
        fd = finite_difference_gradient(enc, dec, H, T)
        _, n = enc.Dmat.shape
        start = encoder_scalar_count(enc)
        b_size = dec.B.size
        assert_gradients_match(flatten_grads(grads)[start:start + b_size],
                               fd[start:start + b_size])
        assert np.linalg.norm(grads.dB) > 0

    def test_gradient_vanishes_at_oracle_minimum(self):
        target = np.array([[2.0], [0.0], [0.0]], dtype=complex)
        dec = constant_decoder([1.0, 0.0, 0.0])
        enc = basis_encoder(3)
        loss, grads = backward(enc, dec, np.asarray(target), target)
        assert loss == 0.0
        assert np.linalg.norm(grads.db3) < 1e-12
        assert np.linalg.norm(grads.dW3) < 1e-12

    def test_finite_gradients_flagged(self):
        enc, dec, H, T = tiny_model(104)
        bad = H.copy()
        bad[0, 0] = np.nan
        with pytest.raises(Exception, match="non-finite|zero-norm"):
            backward(enc, dec, bad, T)


class TestAdamStep:
    def zero_grads_like(self, enc, dec):
        from chartcomp.training import GradientSet
        return GradientSet(dDmat=np.zeros_like(enc.Dmat), dZmat=np.zeros_like(enc.Zmat),
                           dbeta=0.0, dB=np.zeros_like(dec.B),
                           dW1=np.zeros_like(dec.W1), db1=np.zeros_like(dec.b1),
                           dW2=np.zeros_like(dec.W2), db2=np.zeros_like(dec.b2),
                           dW3=np.zeros_like(dec.W3), db3=np.zeros_like(dec.b3))

    def test_zero_gradient_is_identity(self):
        enc, dec, _, _ = tiny_model(40)
        cfg = TrainConfig(rng_seed=0)
        state = AdamState.zeros(flatten_params(enc, dec).size)
        enc2, dec2, state2 = adam_step(enc, dec, self.zero_grads_like(enc, dec), state, cfg)
        assert np.array_equal(flatten_params(enc, dec), flatten_params(enc2, dec2))
        assert state2.step == 1

    def test_constant_gradient_step_approaches_learning_rate(self):
        enc, dec, _, _ = tiny_model(41)
        cfg = TrainConfig(learning_rate=1e-3, rng_seed=0)
        grads = self.zero_grads_like(enc, dec)
        grads.dB = np.full_like(dec.B, 0.01)
        state = AdamState.zeros(flatten_params(enc, dec).size)
        for _ in range(400):
            prev = dec.B.copy()
            enc, dec, state = adam_step(enc, dec, grads, state, cfg)
        step = np.abs(dec.B - prev)
        assert np.allclose(step, cfg.learning_rate, rtol=1e-2)

    def test_deterministic_trajectories(self):
        def run():
            enc, dec, H, T = tiny_model(42)
            cfg = TrainConfig(learning_rate=1e-2, rng_seed=0)
            state = AdamState.zeros(flatten_params(enc, dec).size)
            for _ in range(5):
                _, grads = backward(enc, dec, H, T)
                enc, dec, state = adam_step(enc, dec, grads, state, cfg)
            return flatten_params(enc, dec)
        assert np.array_equal(run(), run())

    def test_beta_clamped_positive(self):
        enc, dec, _, _ = tiny_model(43)
        enc = EncoderParams(Dmat=enc.Dmat, Zmat=enc.Zmat, beta=1e-7)
        cfg = TrainConfig(learning_rate=0.5, rng_seed=0)
        grads = self.zero_grads_like(enc, dec)
        grads.dbeta = 1.0  # push beta strongly negative
        state = AdamState.zeros(flatten_params(enc, dec).size)
        enc2, _, _ = adam_step(enc, dec, grads, state, cfg)
        assert enc2.beta >= 1e-6


class TestTrainLoop:
    def test_loss_halves_on_los_dataset(self, los_dataset):
        from chartcomp.charting import isomap_init
        from chartcomp.model import ModelConfig, init_model
        Hc = los_dataset.channel_matrix("calibration")
        chart = isomap_init(Hc, k=8, d=2)
        mcfg = ModelConfig(d=2, F=32, T=32, sigma_B=1.0, target_subcarrier=4, rng_seed=1)
        enc, dec = init_model(mcfg, chart, Hc, n_out=los_dataset.antenna_count)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=32, epochs=40, rng_seed=2,
                          patience=40, val_fraction=0.1)
        result = train(enc, dec, los_dataset, 4, cfg)
        assert not result.diverged
        assert result.log[-1].train_loss < 0.5 * result.log[0].train_loss

    def test_frozen_encoder_bit_identical(self, los_dataset):
        enc, dec, _, _ = tiny_model(50, D=los_dataset.dim,
                                    n_out=los_dataset.antenna_count)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=32, epochs=3, rng_seed=3,
                          val_fraction=0.0, freeze_encoder=True)
        result = train(enc, dec, los_dataset, 2, cfg)
        assert np.array_equal(result.enc.Dmat, enc.Dmat)
        assert np.array_equal(result.enc.Zmat, enc.Zmat)
        assert result.enc.beta == enc.beta
        assert not np.array_equal(result.dec.W3, dec.W3)

    def test_same_seed_identical_logs(self, los_dataset):
        def run():
            enc, dec, _, _ = tiny_model(51, D=los_dataset.dim,
                                        n_out=los_dataset.antenna_count)
            cfg = TrainConfig(learning_rate=1e-3, batch_size=32, epochs=3, rng_seed=4,
                              val_fraction=0.2)
            return train(enc, dec, los_dataset, 2, cfg).log
        log1, log2 = run(), run()
        assert [(r.train_loss, r.val_median_rho, r.val_mean_rho) for r in log1] == \
               [(r.train_loss, r.val_median_rho, r.val_mean_rho) for r in log2]

    def test_returns_best_validation_checkpoint(self, los_dataset):
        enc, dec, _, _ = tiny_model(52, D=los_dataset.dim,
                                    n_out=los_dataset.antenna_count)
        cfg = TrainConfig(learning_rate=3e-3, batch_size=32, epochs=10, rng_seed=5,
                          val_fraction=0.2, patience=10)
        result = train(enc, dec, los_dataset, 2, cfg)
        best_logged = max(r.val_median_rho for r in result.log)
        H = los_dataset.channel_matrix("train")
        T = los_dataset.target_blocks("train", 2)
        # re-evaluate the returned parameters on the same validation subset
        rng = np.random.default_rng(cfg.rng_seed)
        n = H.shape[1]
        val_idx = rng.permutation(n)[:int(round(0.2 * n))]
        vals = rho_values(result.enc, result.dec, H[:, val_idx], T[:, val_idx])
        assert np.isclose(float(np.median(vals)), best_logged, atol=1e-12)
        assert result.best_epoch == int(np.argmax([r.val_median_rho for r in result.log])) + 1

    def test_divergence_aborts_with_last_good(self, los_dataset):
        # a non-finite channel makes the first backward pass blow up; the
        # loop must stop and hand back finite parameters
        from dataclasses import replace as dc_replace
        from chartcomp.datagen import Dataset
        idx = int(los_dataset.indices("train")[0])
        bad_sample = los_dataset.samples[idx]
        bad_h = bad_sample.h.copy()
        bad_h[0] = np.nan + 1j * np.nan
        samples = list(los_dataset.samples)
        samples[idx] = dc_replace(bad_sample, h=bad_h)
        poisoned = Dataset(scene=los_dataset.scene, antenna_count=los_dataset.antenna_count,
                           samples=samples, split_labels=los_dataset.split_labels.copy())
        enc, dec, _, _ = tiny_model(53, D=los_dataset.dim,
                                    n_out=los_dataset.antenna_count)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=200, epochs=5, rng_seed=6,
                          val_fraction=0.0)
        result = train(enc, dec, poisoned, 2, cfg)
        assert result.diverged
        assert np.all(np.isfinite(flatten_params(result.enc, result.dec)))
        assert np.array_equal(result.enc.Dmat, enc.Dmat)  # aborted before any epoch closed

    def test_batch_size_validated(self, los_dataset):
        enc, dec, _, _ = tiny_model(54, D=los_dataset.dim,
                                    n_out=los_dataset.antenna_count)
        cfg = TrainConfig(batch_size=10_000, epochs=1, rng_seed=0)
        with pytest.raises(ConfigError):
            train(enc, dec, los_dataset, 2, cfg)


class TestChartCosineSimilarity:
    def make_encoder(self):
        Zmat = np.array([[1.0, 1.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]])
        Dmat = np.eye(5, 4, dtype=complex)
        return EncoderParams(Dmat=Dmat, Zmat=Zmat, beta=1e5)

    def test_equal_embeddings(self):
        enc = self.make_encoder()
        h = np.eye(5, dtype=complex)[:, 0]
        assert np.isclose(chart_cosine_similarity(enc, h, h), 1.0)

    def test_orthogonal_embeddings(self):
        enc = self.make_encoder()
        e = np.eye(5, dtype=complex)
        # columns 0 and 2 embed to (1,0) and (0,1)
        assert chart_cosine_similarity(enc, e[:, 0], e[:, 2]) < 1e-4

    def test_known_value(self):
        enc = self.make_encoder()
        e = np.eye(5, dtype=complex)
        got = chart_cosine_similarity(enc, e[:, 0], e[:, 1])
        assert np.isclose(got, 1.0 / np.sqrt(2), atol=1e-4)

    def test_near_zero_embedding_rejected(self):
        Zmat = np.array([[0.0, 1.0], [0.0, 0.0]])
        enc = EncoderParams(Dmat=np.eye(3, 2, dtype=complex), Zmat=Zmat, beta=1e5)
        e = np.eye(3, dtype=complex)
        with pytest.raises(ValueError):
            chart_cosine_similarity(enc, e[:, 0], e[:, 1])
