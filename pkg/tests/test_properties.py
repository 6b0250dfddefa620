"""Randomized invariants checked with hypothesis."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from squintlab.array import ArrayConfig, far_field_steering
from squintlab.beamformers import design_ttd_dpp, effective_analog, spectral_efficiency
from squintlab.channel import PathSet, SubcarrierGrid, generate_channel, pilot_sensing_matrix, random_combiners
from squintlab.estimation import SdDictionary, omp_block_estimate
from squintlab.harness import SWEEPS, ExperimentSpec, parse_config, serialize_config
from squintlab.isac import (ImConfig, SubarrayCodebook, im_index_bits, isac_beamformer, select_subarray,
                            subarray_objectives)
from squintlab.squint import squint_deviation_profile

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

angles = st.floats(min_value=-1.4, max_value=1.4)
seeds = st.integers(0, 2**32 - 1)
carriers = st.sampled_from([28e9, 60e9, 140e9, 300e9])


def scene(seed, N=16, M=4, B=30e9, fc=300e9, L=3):
    rng = np.random.default_rng(seed)
    cfg = ArrayConfig(N, fc)
    grid = SubcarrierGrid(M, fc, B)
    return generate_channel(cfg, grid, PathSet.random(L, rng))


class TestSteeringProperties:

    @FAST
    @given(n=st.integers(2, 64), fc=carriers, ratio=st.floats(0.5, 1.5), theta=angles)
    def test_unit_modulus(self, n, fc, ratio, theta):
        a = far_field_steering(ArrayConfig(n, fc), fc * ratio, theta)
        assert np.allclose(np.abs(a), 1.0)

    @FAST
    @given(theta=angles, fc=carriers, m=st.integers(1, 16))
    def test_zero_bandwidth_no_squint(self, theta, fc, m):
        """Every subcarrier sits on the carrier, so deviations and losses vanish."""
        rep = squint_deviation_profile(ArrayConfig(32, fc), SubcarrierGrid(m, fc, 0.0), theta)
        assert np.allclose(rep.deviation_rad, 0.0, atol=1e-12)
        assert np.allclose(rep.gain_loss_db, 0.0, atol=1e-9)

    @FAST
    @given(theta=st.floats(0.05, 1.2), frac=st.floats(0.01, 0.3))
    def test_deviation_sign_and_monotone(self, theta, frac):
        """For a positive steering angle the beam moves outward below the carrier and inward above it."""
        fc = 300e9
        rep = squint_deviation_profile(ArrayConfig(32, fc), SubcarrierGrid(8, fc, frac * fc), theta)
        d = rep.deviation_rad
        assert np.all(np.diff(d) <= 0)  # flat only where clipped at endfire
        assert d[0] > 0 > d[-1]

    @FAST
    @given(theta=st.floats(-1.0, 1.0), n_ttd=st.sampled_from([2, 4, 8]))
    def test_analog_weights_unit_modulus(self, theta, n_ttd):
        cfg = ArrayConfig(32, 300e9)
        grid = SubcarrierGrid(4, 300e9, 30e9)
        bf, ttd = design_ttd_dpp(np.array([theta]), cfg, grid, n_ttd)
        for f in grid.frequencies:
            assert np.allclose(np.abs(effective_analog(bf.analog, ttd, f)), 1.0)


class TestChannelProperties:

    @FAST
    @given(seed=seeds)
    def test_zero_bandwidth_models_coincide(self, seed):
        ch = scene(seed, B=0.0)
        assert np.array_equal(ch.h, ch.narrowband_model().h)

    @FAST
    @given(seed=seeds, snr=st.floats(-20, 30))
    def test_se_bounded_by_matched_filter(self, seed, snr):
        ch = scene(seed)
        F = (ch.h.conj() / np.linalg.norm(ch.h, axis=1, keepdims=True))[:, :, None]
        best = spectral_efficiency(ch.h, F, snr)
        rng = np.random.default_rng(seed + 1)
        G = rng.standard_normal(F.shape) + 1j * rng.standard_normal(F.shape)
        G /= np.linalg.norm(G, axis=(1, 2), keepdims=True)
        assert spectral_efficiency(ch.h, G, snr) <= best + 1e-9


class TestEstimationProperties:

    @FAST
    @given(seed=seeds, k=st.integers(1, 6))
    def test_omp_residual_non_increasing(self, seed, k):
        rng = np.random.default_rng(seed)
        cfg, grid = ArrayConfig(16, 300e9), SubcarrierGrid(4, 300e9, 30e9)
        D = SdDictionary.build(cfg, grid, np.arcsin(np.linspace(-0.9, 0.9, 32)))
        ch = generate_channel(cfg, grid, PathSet.random(2, rng))
        W = random_combiners(3, 16, 2, rng)
        Phi = pilot_sensing_matrix(W, 4)
        y = np.einsum("myn,mn->my", Phi, ch.h)
        res = omp_block_estimate(y, Phi, D, k)
        assert np.all(np.diff(res.residuals) <= 1e-9 * res.residuals[0])
        assert len(set(res.support.tolist())) == len(res.support)


class TestIsacProperties:

    @FAST
    @given(seed=seeds, eta=st.floats(0, 1))
    def test_tradeoff_power(self, seed, eta):
        rng = np.random.default_rng(seed)
        shape = (4, 8, 1)
        Fc = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        Fr = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        F = isac_beamformer(Fc, Fr, eta)
        assert np.allclose(np.linalg.norm(F, axis=(1, 2)), 1.0)

    @FAST
    @given(seed=seeds)
    def test_eta_endpoints(self, seed):
        rng = np.random.default_rng(seed)
        Fc = rng.standard_normal((3, 8, 1)) + 0j
        Fr = rng.standard_normal((3, 8, 1)) + 0j
        unit = lambda X: X / np.linalg.norm(X, axis=(1, 2), keepdims=True)
        assert np.allclose(isac_beamformer(Fc, Fr, 1.0), unit(Fc))
        assert np.allclose(isac_beamformer(Fc, Fr, 0.0), unit(Fr))

    @FAST
    @given(seed=seeds, target=st.floats(-1.0, 1.0))
    def test_bsc_never_worse(self, seed, target):
        """Squint-aware weights pointwise dominate carrier weights once both are scored on the true channel."""
        ch = scene(seed)
        cb = SubarrayCodebook.generate(16, 4)
        for eta in (0.0, 1.0):
            b = select_subarray(cb, ch, [target], eta=eta, mode="bsc").objective
            n = select_subarray(cb, ch, [target], eta=eta, mode="no-bsc").objective
            assert b >= n - 1e-9 * abs(n)

    @FAST
    @given(seed=seeds, perm_seed=seeds)
    def test_codebook_order_invariance(self, seed, perm_seed):
        ch = scene(seed)
        base = SubarrayCodebook.generate(16, 4)
        perm = np.random.default_rng(perm_seed).permutation(len(base))
        rows = base.entries[perm]
        rows = np.array([np.random.default_rng(perm_seed).permutation(r) for r in rows])
        shuffled = SubarrayCodebook(rows, 16)
        a = select_subarray(base, ch, [0.3], eta=0.5, mode="bsc")
        b = select_subarray(shuffled, ch, [0.3], eta=0.5, mode="bsc")
        assert np.array_equal(a.indices, b.indices)
        assert a.objective == b.objective

    @FAST
    @given(seed=seeds)
    def test_zero_bandwidth_modes_agree(self, seed):
        ch = scene(seed, B=0.0)
        cb = SubarrayCodebook.generate(16, 4)
        a = subarray_objectives(cb, ch, [0.4], eta=0.5, snr_db=0, squint_aware=True)
        b = subarray_objectives(cb, ch, [0.4], eta=0.5, snr_db=0, squint_aware=False)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    @given(L=st.integers(1, 40), data=st.data())
    def test_index_bits(self, L, data):
        k = data.draw(st.integers(1, L))
        bits = im_index_bits(L, k)
        assert 2**bits <= math.comb(L, k) < 2 ** (bits + 1)
        im = ImConfig(L, k) if math.comb(L, k) <= 4096 else None
        if im is not None:
            assert len(im.patterns()) == 2**bits


SWEEP_VALUES = {
    "snr_db": st.floats(-30, 40),
    "eta": st.floats(0, 1),
    "theta0": st.floats(-80, 80),
    "bandwidth_hz": st.floats(0, 50e9),
}


@st.composite
def specs(draw):
    exp = draw(st.sampled_from(sorted(SWEEPS)))
    name = draw(st.sampled_from(SWEEPS[exp]))
    values = draw(st.lists(SWEEP_VALUES[name], min_size=1, max_size=4))
    N = draw(st.integers(2, 256))
    coeff = complex(draw(st.floats(-1, 1)), draw(st.floats(-1, 1)))
    return ExperimentSpec(experiment=exp, n_antennas=N, carrier_hz=draw(carriers),
                          n_rf=draw(st.integers(1, N)), n_subcarriers=draw(st.integers(1, 64)),
                          trials=draw(st.integers(1, 1000)), seed=draw(st.integers(0, 2**31)),
                          sweep_name=name, sweep_values=tuple(values),
                          options=(("n_snapshots", draw(st.integers(1, 512))), ("mc_coeff", coeff)))


class TestConfigProperties:

    @settings(max_examples=60, deadline=None)
    @given(spec=specs())
    def test_round_trip(self, spec):
        assert parse_config(serialize_config(spec)) == spec
