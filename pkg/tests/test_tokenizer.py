"""Finite scalar quantization, code packing and codebook statistics."""

import itertools

import numpy as np
import pytest

from c2lt3d.core.tokenizer import (
    BND_CODEBOOK,
    BND_SLOTS,
    GEO_CODEBOOK,
    GEO_SLOTS,
    LEVELS,
    TokenPair,
    boundary_features,
    code_stats,
    dequantize,
    fsq_quantize,
    geometry_features,
    pack,
    tokenize,
    unpack,
)
from c2lt3d.utils.errors import DataError


def test_codebook_sizes():
    assert LEVELS == 7
    assert GEO_CODEBOOK == 117649
    assert BND_CODEBOOK == 2401


@pytest.mark.parametrize(
    "x, level",
    [(0.0, 3), (0.17, 4), (-1.0, 0), (1.0, 6), (2.0, 6), (-5.0, 0), (0.45, 4), (0.55, 5)],
)
def test_fsq_snaps_to_nearest_level(x, level):
    levels, values = fsq_quantize([x], 1)
    assert levels.tolist() == [level]
    assert values[0] == pytest.approx(-1.0 + level / 3.0)


def test_exact_midpoint_goes_to_the_lower_level():
    # With five levels the grid is {-1, -0.5, 0, 0.5, 1}; 0.25 sits between 0 and 0.5.
    levels, values = fsq_quantize([0.25, -0.75], 2, levels=5)
    assert levels.tolist() == [2, 0]
    assert values.tolist() == [0.0, -1.0]


def test_fsq_dimension_mismatch():
    with pytest.raises(DataError):
        fsq_quantize(np.zeros(5), GEO_SLOTS)


def test_fsq_rejects_non_finite():
    with pytest.raises(DataError):
        fsq_quantize([np.nan, 0.0, 0.0, 0.0], BND_SLOTS)


@pytest.mark.parametrize("seed", range(5))
def test_fsq_is_idempotent_with_bounded_error(seed):
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, GEO_SLOTS)
    levels, values = fsq_quantize(x, GEO_SLOTS)
    again, _ = fsq_quantize(values, GEO_SLOTS)
    assert np.array_equal(levels, again)
    assert np.max(np.abs(values - x)) <= 1.0 / 6.0 + 1e-12
    np.testing.assert_allclose(dequantize(levels), values)


def test_pack_examples():
    assert pack([0] * 6) == 0
    assert pack([6] * 6) == GEO_CODEBOOK - 1
    assert pack([0, 0, 0, 0, 0, 1]) == 1
    assert pack([1, 0, 0, 0, 0, 0]) == 7**5
    with pytest.raises(DataError):
        pack([7, 0, 0, 0])


def test_boundary_codebook_is_a_bijection():
    seen = set()
    for levels in itertools.product(range(LEVELS), repeat=BND_SLOTS):
        index = pack(levels)
        assert 0 <= index < BND_CODEBOOK
        assert tuple(unpack(index, BND_SLOTS).tolist()) == levels
        seen.add(index)
    assert len(seen) == BND_CODEBOOK


def test_geometry_codebook_round_trips_on_a_sample():
    rng = np.random.default_rng(0)
    for index in rng.integers(0, GEO_CODEBOOK, 500).tolist():
        assert pack(unpack(index, GEO_SLOTS)) == index
    with pytest.raises(DataError):
        unpack(GEO_CODEBOOK, GEO_SLOTS)


def test_code_stats_examples():
    stats = code_stats([1, 1, 2, 2], BND_CODEBOOK)
    assert stats.perplexity == pytest.approx(2.0)
    assert stats.utilization == pytest.approx(2 / BND_CODEBOOK)
    assert code_stats([5], BND_CODEBOOK).perplexity == pytest.approx(1.0)
    assert code_stats(range(16), 16).perplexity == pytest.approx(16.0)
    assert code_stats(range(16), 16).utilization == 1.0


def test_perplexity_never_exceeds_distinct_codes():
    codes = np.random.default_rng(2).integers(0, 40, 300)
    stats = code_stats(codes, BND_CODEBOOK)
    assert 1.0 <= stats.perplexity <= len(np.unique(codes)) + 1e-9


def test_code_stats_needs_codes():
    with pytest.raises(DataError):
        code_stats([], BND_CODEBOOK)


def test_features_stay_in_range(tower_record):
    for chart in tower_record.charts:
        geo = geometry_features(chart.local_points, chart.local_normals)
        bnd = boundary_features(chart.local_points)
        assert geo.shape == (GEO_SLOTS,)
        assert bnd.shape == (BND_SLOTS,)
        assert np.all(np.abs(geo) <= 1.0)
        assert np.all(np.abs(bnd) <= 1.0)


def test_tokenize_is_deterministic(tower_record):
    chart = tower_record.charts[0]
    token = tokenize(chart.local_points, chart.local_normals)
    assert token == chart.token
    assert TokenPair.from_dict(token.to_dict()) == token
    assert all(0 <= v < LEVELS for v in token.geo_levels + token.bnd_levels)


def test_flat_ring_features():
    t = 2.0 * np.pi * np.arange(8) / 8
    ring = np.column_stack([np.cos(t), np.sin(t), np.zeros(8)])
    normals = np.tile([0.0, 0.0, 1.0], (8, 1))
    geo = geometry_features(ring, normals)
    # Flat chart: mean |z| is 0 and the tangential normal is zero.
    assert geo[5] == -1.0
    np.testing.assert_allclose(geo[3:5], 0.0, atol=1e-12)
    bnd = boundary_features(ring)
    assert bnd[0] == 1.0


def test_tokenize_rejects_empty_chart():
    with pytest.raises(DataError):
        tokenize(np.zeros((0, 3)), np.zeros((0, 3)))
