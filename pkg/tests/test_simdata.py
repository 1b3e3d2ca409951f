"""Scene synthesis, illumination geometry, pattern generators, noise, datasets."""

import numpy as np
import pytest

from ptygrad.errors import DimensionError, DomainError
from ptygrad.fields import OpticsConfig, dft2
from ptygrad.models import SimScene
from ptygrad.simdata import (
    Dataset,
    NoiseModel,
    aperture_union_mask,
    bandlimit_to_apertures,
    gen_illumination_grid,
    gen_sim_patterns,
    gen_spi_patterns,
    generate_dataset,
    generate_sim_dataset,
    generate_spi_dataset,
    incoherent_psf,
    led_wavevectors,
    make_test_object,
    synth_object,
)

rng = np.random.default_rng(3)


def small_cfg(wavevectors=((0.0, 0.0), (2.0 / 16, 0.0)), side=16, stride=2):
    return OpticsConfig(lambda_um=1.0, na=3.0 / side, n_high=side, stride=stride,
                        px_high=1.0, wavevectors=wavevectors)


class TestIlluminationGrid:
    def test_raster_geometry(self):
        wv = gen_illumination_grid(3, 3, 0.1)
        assert len(wv) == 9
        assert wv[4] == (0.0, 0.0)  # center of a 3x3 raster
        assert wv[0] == (-0.1, -0.1)
        assert wv[-1] == pytest.approx((0.1, 0.1))

    def test_even_grid_rejected(self):
        with pytest.raises(DomainError):
            gen_illumination_grid(4, 4, 0.1)
        assert len(gen_illumination_grid(4, 4, 0.1, allow_even=True)) == 16

    def test_led_wavevectors_are_direction_sines(self):
        wv = led_wavevectors(3, 3, pitch_mm=4.0, distance_mm=80.0)
        assert wv[4] == (0.0, 0.0)
        # corner LED: offset (4, 4) mm at 80 mm height
        expected = 4.0 / np.sqrt(16 + 16 + 6400)
        assert wv[0] == pytest.approx((-expected, -expected))
        assert all(np.hypot(x, y) < 1 for x, y in wv)


class TestObjects:
    def test_synth_object_phase_rescaled(self):
        amp = np.ones((8, 8))
        phase = rng.random((8, 8))
        obj = synth_object(amp, phase, (0.0, np.pi / 2))
        angles = np.angle(obj.complex)
        assert angles.min() == pytest.approx(0.0, abs=1e-12)
        assert angles.max() == pytest.approx(np.pi / 2, rel=1e-12)

    def test_synth_object_negative_amplitude(self):
        with pytest.raises(DomainError):
            synth_object(-np.ones((4, 4)), np.zeros((4, 4)))

    def test_make_test_object_ranges(self):
        obj = make_test_object(32, seed=1)
        amp = np.abs(obj.complex)
        assert amp.min() >= 0.25 - 1e-9
        assert amp.max() <= 1.0 + 1e-9

    def test_bandlimit_idempotent(self):
        cfg = small_cfg()
        obj = make_test_object(16, seed=0)
        b1 = bandlimit_to_apertures(obj, cfg)
        b2 = bandlimit_to_apertures(b1, cfg)
        assert np.max(np.abs(b1.complex - b2.complex)) < 1e-12

    def test_bandlimit_kills_out_of_union_content(self):
        cfg = small_cfg()
        obj = make_test_object(16, seed=0)
        spec = dft2(bandlimit_to_apertures(obj, cfg).complex)
        assert np.max(np.abs(spec[aperture_union_mask(cfg) == 0])) < 1e-12


class TestSimPatterns:
    def test_default_four_frame_set(self):
        pats = gen_sim_patterns(32, count=4, freq_cycles_per_px=0.1)
        assert len(pats) == 4
        for p in pats:
            assert p.shape == (32, 32)
            assert np.all(p >= 0)
            assert p.max() <= 1.0 + 1e-12

    def test_pattern_frequency(self):
        # A 0-degree pattern oscillates along x with the requested frequency.
        f = 0.125  # exactly 4 cycles over 32 px
        p = gen_sim_patterns(32, count=1, freq_cycles_per_px=f,
                             orientations_deg=[0.0], phases=[0.0])[0]
        row = p[0]  # period is 8 px
        assert row[0] == pytest.approx(1.0)
        assert row[2] == pytest.approx(0.5, abs=1e-9)   # quarter period
        assert row[4] == pytest.approx(0.0, abs=1e-12)  # half period

    def test_modulation_cap(self):
        with pytest.raises(DomainError):
            gen_sim_patterns(16, modulation=1.5)


class TestSpiPatterns:
    def test_random_binary(self):
        pats = gen_spi_patterns("random_binary", 10, 8, seed=4)
        assert len(pats) == 10
        assert set(np.unique(np.stack(pats))) <= {0.0, 1.0}

    def test_orthogonal_basis(self):
        side = 4
        pats = gen_spi_patterns("orthogonal", side * side, side)
        flat = np.stack([p.reshape(-1) for p in pats])
        gram = flat @ flat.T
        assert np.max(np.abs(gram - side * side * np.eye(side * side))) < 1e-9

    def test_orthogonal_requires_power_of_two(self):
        with pytest.raises(DomainError):
            gen_spi_patterns("orthogonal", 4, 6)

    def test_count_cap(self):
        with pytest.raises(DomainError):
            gen_spi_patterns("orthogonal", 17, 4)


class TestIncoherentPsf:
    def test_unit_sum_nonnegative(self):
        psf = incoherent_psf(32, 6.0)
        assert psf.sum() == pytest.approx(1.0, rel=1e-12)
        assert np.all(psf >= 0)

    def test_otf_support_doubles_coherent_cutoff(self):
        # The OTF (transform of |psf|^2) is the autocorrelation of the pupil:
        # its support reaches twice the coherent radius. The pupil passes
        # bins strictly inside radius 8 (max bin 7), so the autocorrelation
        # extends to bin 14 and vanishes from bin 15 on.
        side, r = 64, 8.0
        otf = np.abs(dft2(incoherent_psf(side, r)))
        c = side // 2
        profile = otf[c, c:] / otf[c, c]
        assert profile[14] > 1e-3
        assert profile[15] < 1e-12


class TestNoise:
    def test_gaussian_reproducible_and_clipped(self):
        imgs = [np.full((8, 8), 0.01)]
        noisy1 = NoiseModel("gaussian", 0.5, seed=2).apply(imgs)
        noisy2 = NoiseModel("gaussian", 0.5, seed=2).apply(imgs)
        assert np.array_equal(noisy1[0], noisy2[0])
        assert np.all(noisy1[0] >= 0)

    def test_poisson_mean_scales(self):
        imgs = [np.full((64, 64), 2.0)]
        noisy = NoiseModel("poisson", 1000.0, seed=0).apply(imgs)
        assert noisy[0].mean() == pytest.approx(2.0, rel=0.01)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            NoiseModel("salt", 0.1)


class TestDatasets:
    def test_stride_mode_matches_forward(self):
        from ptygrad.models import fp_intensity_forward

        cfg = small_cfg()
        obj = make_test_object(16, seed=5)
        ds = generate_dataset(cfg, obj, "stride")
        assert len(ds.measurements) == 2
        for n, m in enumerate(ds.measurements):
            assert np.array_equal(m, fp_intensity_forward(obj, cfg, n))

    def test_crop_mode_shapes_and_energy(self):
        cfg = small_cfg()
        obj = make_test_object(16, seed=5)
        ds = generate_dataset(cfg, obj, "crop")
        for m in ds.measurements:
            assert m.shape == (cfg.m_side, cfg.m_side)
            assert np.all(m >= 0)

    def test_count_mismatch_rejected(self):
        cfg = small_cfg()
        with pytest.raises(DimensionError):
            Dataset(cfg=cfg, mode="stride", measurements=[np.ones((8, 8))])

    def test_spi_dataset(self):
        obj = rng.random((4, 4))
        pats = gen_spi_patterns("orthogonal", 16, 4)
        ds = generate_spi_dataset(obj, pats)
        assert len(ds.measurements) == 16
        assert ds.measurements[0] == pytest.approx(float(np.sum(obj * pats[0])))

    def test_sim_dataset(self):
        side = 16
        psf = incoherent_psf(side, 3.0)
        scene = SimScene(rng.random((side, side)), gen_sim_patterns(side), psf)
        ds = generate_sim_dataset(scene)
        assert len(ds.measurements) == 4
        assert ds.measurements[0].shape == (side, side)
