"""Tests for numerology, constellation construction, and bit mapping."""

import numpy as np
import pytest

from wavelink.grid import (
    Constellation,
    Numerology,
    ResourceGrid,
    bits_to_index,
    build_qam_constellation,
    hard_demap,
    inband_bins,
    index_to_bits,
    map_bits,
    normalize_constellation,
    oob_bins,
    save_constellation_csv,
)


def test_numerology_defaults():
    num = Numerology()
    assert num.ifft_size == 288
    assert num.sample_rate_hz == pytest.approx(8.64e6)
    # 2.7 us at 8.64 MHz rounds to 23 samples
    assert num.cp_samples == 23
    assert num.symbol_samples == 311
    assert num.slot_samples == 14 * 311
    assert num.n_bits == 144 * 14 * 6


def test_numerology_desk_preset():
    num = Numerology.desk()
    assert num.n_subcarriers == 72
    assert num.ifft_size == 144
    assert num.cp_samples == 12
    assert num.bits_per_symbol == 4


def test_numerology_validation():
    with pytest.raises(ValueError):
        Numerology(n_subcarriers=143)
    with pytest.raises(ValueError):
        Numerology(n_symbols=0)
    with pytest.raises(ValueError):
        Numerology(cp_samples=288)


def test_inband_bins_layout():
    num = Numerology(n_subcarriers=4, n_symbols=1, oversampling=2, cp_samples=0,
                     bits_per_symbol=2)
    # offsets -2..1 relative to DC, modulo ifft_size=8
    assert list(inband_bins(num)) == [6, 7, 0, 1]
    assert list(oob_bins(num)) == [2, 3, 4, 5]


def test_inband_oob_partition():
    num = Numerology()
    ib, ob = inband_bins(num), oob_bins(num)
    assert len(ib) == num.n_subcarriers
    assert len(ob) == num.ifft_size - num.n_subcarriers
    assert len(np.union1d(ib, ob)) == num.ifft_size


def test_bit_index_roundtrip():
    rng = np.random.default_rng(7)
    bits = rng.integers(0, 2, size=(5, 11, 6))
    assert np.array_equal(index_to_bits(bits_to_index(bits), 6), bits)
    # big endian: [1,0] -> 2
    assert bits_to_index(np.array([1, 0])) == 2


class TestQamConstruction:
    def test_qpsk_points(self):
        c = build_qam_constellation(2)
        s = 1 / np.sqrt(2)
        # bit word (b0, b1): b0 selects real sign, b1 imaginary sign
        expect = np.array([s + 1j * s, s - 1j * s, -s + 1j * s, -s - 1j * s])
        assert np.allclose(c.points, expect)

    def test_unit_power_and_zero_mean(self):
        for q_m in (2, 4, 6, 8):
            c = build_qam_constellation(q_m)
            assert abs(np.mean(np.abs(c.points) ** 2) - 1) < 1e-12
            assert abs(c.points.mean()) < 1e-12

    def test_16qam_levels(self):
        c = build_qam_constellation(4)
        lv = np.unique(np.round(c.re * np.sqrt(10)).astype(int))
        assert list(lv) == [-3, -1, 1, 3]

    def test_gray_adjacency_exhaustive(self):
        # neighbouring points along either axis differ in exactly one bit
        for q_m in (2, 4, 6):
            c = build_qam_constellation(q_m)
            labels = c.bit_labels()
            side = 1 << (q_m // 2)
            # grid coordinates from the level ranks
            ri = np.searchsorted(np.unique(np.round(c.re * 1e6)), np.round(c.re * 1e6))
            qi = np.searchsorted(np.unique(np.round(c.im * 1e6)), np.round(c.im * 1e6))
            grid = -np.ones((side, side), dtype=int)
            grid[ri, qi] = np.arange(c.size)
            assert (grid >= 0).all()
            for a in range(side):
                for b in range(side):
                    here = labels[grid[a, b]]
                    for na, nb in ((a + 1, b), (a, b + 1)):
                        if na < side and nb < side:
                            there = labels[grid[na, nb]]
                            assert int(np.sum(here != there)) == 1

    def test_odd_qm_rejected(self):
        with pytest.raises(ValueError, match="even"):
            build_qam_constellation(3)


class TestNormalization:
    def test_already_normal_unchanged(self):
        c = build_qam_constellation(4)
        n = normalize_constellation(c)
        assert np.allclose(n.points, c.points, atol=1e-12)

    def test_two_point_example(self):
        c = Constellation(np.array([0.0, 2.0]), np.array([0.0, 0.0]))
        n = normalize_constellation(c)
        assert np.allclose(sorted(n.re), [-1.0, 1.0], atol=1e-12)
        assert np.allclose(n.im, 0.0)

    def test_moments_random(self):
        rng = np.random.default_rng(21)
        pts = rng.normal(size=64) + 1j * rng.normal(size=64)
        n = normalize_constellation(Constellation.from_points(pts))
        assert abs(n.points.mean()) < 1e-9
        assert abs(np.mean(np.abs(n.points) ** 2) - 1) < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(22)
        pts = 3 * rng.normal(size=16) + 1j * rng.normal(size=16) + (2 - 1j)
        once = normalize_constellation(Constellation.from_points(pts))
        twice = normalize_constellation(once)
        assert np.allclose(twice.points, once.points, atol=1e-12)

    def test_affine_invariance_up_to_phase(self):
        rng = np.random.default_rng(23)
        pts = rng.normal(size=16) + 1j * rng.normal(size=16)
        alpha = 1.7 * np.exp(1j * 0.6)
        beta = 0.3 - 0.8j
        base = normalize_constellation(Constellation.from_points(pts))
        moved = normalize_constellation(Constellation.from_points(alpha * pts + beta))
        assert np.allclose(moved.points, base.points * alpha / abs(alpha), atol=1e-10)

    def test_degenerate_rejected(self):
        c = Constellation(np.ones(4), np.zeros(4))
        with pytest.raises(ValueError, match="degenerate"):
            normalize_constellation(c)


class TestMapping:
    def test_map_selects_by_word(self):
        c = build_qam_constellation(2)
        vals = map_bits(np.array([[0, 0], [1, 1]]), c)
        assert vals[0] == c.points[0]
        assert vals[1] == c.points[3]

    def test_roundtrip_all_words(self):
        for q_m in (2, 4, 6):
            c = build_qam_constellation(q_m)
            bits = index_to_bits(np.arange(c.size), q_m)
            assert np.array_equal(hard_demap(map_bits(bits, c), c), bits)

    def test_grid_shape(self):
        rng = np.random.default_rng(3)
        c = build_qam_constellation(4)
        bits = rng.integers(0, 2, size=(72, 14, 4))
        vals = map_bits(bits, c)
        assert vals.shape == (72, 14)
        assert np.array_equal(hard_demap(vals, c), bits)

    def test_word_length_mismatch(self):
        c = build_qam_constellation(4)
        with pytest.raises(ValueError, match="q_m"):
            map_bits(np.zeros((3, 3, 6), dtype=int), c)

    def test_nonbinary_rejected(self):
        c = build_qam_constellation(2)
        with pytest.raises(ValueError, match="0 or 1"):
            map_bits(np.array([[0, 2]]), c)


def test_resource_grid_counts():
    mask = np.ones((4, 3), dtype=bool)
    mask[0, 0] = False
    g = ResourceGrid(np.zeros((4, 3), dtype=complex), mask)
    assert g.n_data == 11
    with pytest.raises(ValueError):
        ResourceGrid(np.zeros((4, 3), dtype=complex), np.ones((3, 4), dtype=bool))


def test_constellation_csv(tmp_path):
    c = build_qam_constellation(2)
    path = tmp_path / "const.csv"
    save_constellation_csv(c, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,label"
    assert len(lines) == 5
    x, y, label = lines[1].split(",")
    assert label == "00"
    assert float(x) == pytest.approx(c.re[0])
    assert float(y) == pytest.approx(c.im[0])
