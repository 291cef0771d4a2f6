import numpy as np
import pytest

from src.app.errors import ArgumentError, DataError, DimensionError
from src.imaging.patchflow import (
    ImageTensor,
    ScoreMap,
    assemble_map,
    coverage_weights,
    embed_patch,
    embed_patches,
    extract_patches,
    patch_count,
    to_anomaly,
    zero_patch_rows,
)
from src.imaging.scoring import anomaly_map, similarity_map
from tests import oracles


class ConstantScorer:
    def __init__(self, value: float):
        self.value = value

    def score(self, patches):
        return np.full(len(patches), self.value)


class MeanScorer:
    def score(self, patches):
        return np.asarray(patches).mean(axis=1)


def ramp(size: int) -> ImageTensor:
    return ImageTensor(np.arange(size * size, dtype=float).reshape(size, size) / (size * size))


class TestImageTensor:
    def test_rejects_non_square(self):
        with pytest.raises(ArgumentError):
            ImageTensor(np.zeros((4, 5)))

    def test_rejects_out_of_range(self):
        with pytest.raises(DataError):
            ImageTensor(np.full((4, 4), 1.5))
        with pytest.raises(DataError):
            ImageTensor(np.full((4, 4), np.nan))

    def test_from_uint8(self):
        img = ImageTensor.from_uint8(np.array([[0, 255], [51, 102]], dtype=np.uint8))
        assert np.allclose(img.pixels, [[0.0, 1.0], [0.2, 0.4]])


class TestExtraction:
    @pytest.mark.parametrize("P", [2, 4, 8])
    @pytest.mark.parametrize("S", [1, 2, 4])
    def test_count_law(self, P, S):
        grid = extract_patches(ramp(32), P, S)
        side = (32 - P) // S + 1
        assert grid.n_patches == side * side == patch_count(32, P, S)
        assert grid.patches.shape == (side * side, P * P)

    @pytest.mark.parametrize("P,S,expected", [(8, 8, 16), (4, 1, 841), (8, 4, 49)])
    def test_known_counts(self, P, S, expected):
        assert patch_count(32, P, S) == expected

    def test_raster_order_and_content(self):
        img = ramp(4)
        grid = extract_patches(img, 2, 2)
        assert grid.anchors.tolist() == [[0, 0], [0, 2], [2, 0], [2, 2]]
        assert np.allclose(grid.patches[1], img.pixels[0:2, 2:4].ravel())
        assert np.allclose(grid.patches[2], img.pixels[2:4, 0:2].ravel())

    def test_errors(self):
        with pytest.raises(ArgumentError):
            extract_patches(ramp(4), 8, 1)
        with pytest.raises(ArgumentError):
            extract_patches(ramp(4), 2, 0)
        with pytest.raises(ArgumentError):
            extract_patches(ramp(9), 3, 1)


class TestEmbedding:
    def test_normalizes(self):
        s = embed_patch(np.array([[0.3, 0.4], [0.0, 0.0]]))
        assert s.n_qubits == 2
        assert np.allclose(s.amplitudes, [0.6, 0.8, 0.0, 0.0])

    def test_constant_patch_is_uniform(self):
        assert np.allclose(embed_patch(np.full(16, 0.7)).amplitudes, np.full(16, 0.25))

    def test_zero_patch_is_uniform(self):
        assert np.allclose(embed_patch(np.zeros(4)).amplitudes, [0.5] * 4)

    def test_zero_rows_in_a_batch(self):
        patches = np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
        assert zero_patch_rows(patches).tolist() == [True, False]
        s = embed_patches(patches)
        assert np.allclose(s.amplitudes, [[0.5] * 4, [1.0, 0.0, 0.0, 0.0]])

    def test_near_zero_rows_count_as_zero(self):
        patches = np.array([[1e-12, 0.0, 0.0, 0.0], [1e-6, 0.0, 0.0, 0.0]])
        assert zero_patch_rows(patches).tolist() == [True, False]
        assert np.allclose(embed_patches(patches).amplitudes, [[0.5] * 4, [1.0, 0.0, 0.0, 0.0]])

    def test_length_must_be_power_of_two(self):
        with pytest.raises(DimensionError):
            embed_patches(np.ones((2, 3)))


class TestAssembly:
    @pytest.mark.parametrize("P,S", [(2, 1), (4, 2), (4, 4), (2, 2)])
    def test_matches_bruteforce_average(self, P, S, rng):
        grid = extract_patches(ramp(8), P, S)
        scores = rng.uniform(size=grid.n_patches)
        assembled = assemble_map(scores, grid, 8)
        assert np.allclose(assembled.values, oracles.accumulate_map(scores, 8, P, S))

    def test_overlap_average(self):
        grid = extract_patches(ramp(3), 2, 1)
        assembled = assemble_map(np.array([1.0, 2.0, 3.0, 2.0]), grid, 3)
        assert assembled.values[1, 1] == pytest.approx(2.0)
        assert assembled.counts[1, 1] == 4
        assert assembled.values[0, 0] == pytest.approx(1.0)

    def test_uncovered_pixels(self):
        grid = extract_patches(ramp(5), 2, 2)
        assembled = assemble_map(np.ones(grid.n_patches), grid, 5)
        assert not assembled.covered[4].any()
        assert assembled.values[4, 4] == 0.0
        assert assembled.mean() == pytest.approx(1.0)

    def test_score_count_checked(self):
        grid = extract_patches(ramp(4), 2, 2)
        with pytest.raises(DimensionError):
            assemble_map(np.ones(3), grid, 4)

    def test_constant_scores_give_constant_map(self):
        smap = similarity_map(ramp(8), ConstantScorer(0.8), 4, 1)
        assert np.allclose(smap.values, 0.8)
        assert np.allclose(anomaly_map(ramp(8), ConstantScorer(0.8), 4, 1).values, 0.2)


class TestAnomaly:
    def test_inverts_and_clamps(self):
        smap = ScoreMap(values=np.array([[1.0, 0.25], [1.2, -0.1]]), counts=np.ones((2, 2), dtype=int))
        assert np.allclose(to_anomaly(smap).values, [[0.0, 0.75], [0.0, 1.0]])

    def test_uncovered_stay_zero(self):
        smap = ScoreMap(values=np.array([[0.5, 0.0]]), counts=np.array([[1, 0]]))
        assert to_anomaly(smap).values.tolist() == [[0.5, 0.0]]


@pytest.mark.parametrize("size,P,S", [(8, 2, 1), (8, 4, 2), (9, 4, 4), (8, 8, 8)])
def test_coverage_weights_reproduce_map_mean(size, P, S, rng):
    img = ImageTensor(rng.uniform(size=(size, size)))
    grid = extract_patches(img, P, S)
    scores = MeanScorer().score(grid.patches)
    w = coverage_weights(grid, size)
    assert w.sum() == pytest.approx(1.0)
    assert float(w @ scores) == pytest.approx(assemble_map(scores, grid, size).mean())
