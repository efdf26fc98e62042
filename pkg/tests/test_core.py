import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from objsal import (
    BinaryFixationMap,
    BoundsError,
    EvalFrame,
    FixationSet,
    PanopticMap,
    SaliencyMap,
    SegmentInfo,
    ShapeError,
    ZeroMassError,
    normalize_unit_max,
    normalize_unit_sum,
    rasterize_fixations,
)


class TestSaliencyMap:
    def test_values_are_readonly_float64(self):
        m = SaliencyMap([[1, 2], [3, 4]])
        assert m.values.dtype == np.float64
        with pytest.raises(ValueError):
            m.values[0, 0] = 5.0

    def test_width_height(self):
        m = SaliencyMap(np.ones((3, 5)))
        assert (m.height, m.width) == (3, 5)

    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValueError):
            SaliencyMap([[1.0, -0.1]])
        with pytest.raises(ValueError):
            SaliencyMap([[1.0, np.nan]])
        with pytest.raises(ValueError):
            SaliencyMap([[1.0, np.inf]])

    def test_rejects_wrong_dims(self):
        with pytest.raises(ShapeError):
            SaliencyMap([1.0, 2.0])

    def test_declared_unit_sum_is_verified(self):
        SaliencyMap([[0.5, 0.5]], "unit-sum")
        with pytest.raises(ValueError):
            SaliencyMap([[0.5, 0.6]], "unit-sum")

    def test_declared_unit_max_rejects_all_zero(self):
        with pytest.raises(ValueError):
            SaliencyMap([[0.0, 0.0]], "unit-max")

    def test_unknown_normalization(self):
        with pytest.raises(ValueError):
            SaliencyMap([[1.0]], "bogus")


class TestNormalize:
    def test_uniform(self):
        m = normalize_unit_sum(SaliencyMap([[1.0, 1.0], [1.0, 1.0]]))
        assert m.values.tolist() == [[0.25, 0.25], [0.25, 0.25]]
        assert m.normalization == "unit-sum"

    def test_proportionality(self):
        m = normalize_unit_sum(SaliencyMap([[3.0, 1.0]]))
        assert m.values.tolist() == [[0.75, 0.25]]

    def test_all_zero_rejected(self):
        with pytest.raises(ZeroMassError):
            normalize_unit_sum(SaliencyMap(np.zeros((2, 2))))
        with pytest.raises(ZeroMassError):
            normalize_unit_max(SaliencyMap(np.zeros((2, 2))))

    def test_unit_max(self):
        m = normalize_unit_max(SaliencyMap([[2.0, 1.0]]))
        assert m.values.tolist() == [[1.0, 0.5]]
        assert m.normalization == "unit-max"

    @given(
        arrays(
            np.float64,
            (4, 5),
            elements=st.floats(0.0, 100.0, allow_nan=False),
        ).filter(lambda a: a.sum() > 1e-6)
    )
    @settings(max_examples=60, deadline=None)
    def test_idempotent_and_argmax_preserving(self, values):
        once = normalize_unit_sum(SaliencyMap(values))
        twice = normalize_unit_sum(once)
        assert np.abs(twice.values - once.values).max() <= 1e-12
        peak = values.max()
        assert np.array_equal(values == peak, once.values == once.values.max())


class TestRasterize:
    def test_single_point(self):
        bits = rasterize_fixations(FixationSet(((0, 0),)), 2, 2)
        assert bits.bits.astype(int).tolist() == [[1, 0], [0, 0]]

    def test_duplicates_collapse(self):
        bits = rasterize_fixations(FixationSet(((0, 0), (0, 0))), 2, 2)
        assert bits.count == 1

    def test_out_of_bounds(self):
        with pytest.raises(BoundsError):
            rasterize_fixations(FixationSet(((5, 0),)), 2, 2)

    def test_subpixel_rounding(self):
        bits = rasterize_fixations(FixationSet(((1.6, 0.2),)), 3, 3)
        assert bits.bits[0, 2]

    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 5)), max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_bit_count_bounded_by_points(self, points):
        bits = rasterize_fixations(FixationSet(tuple(points)), 8, 6)
        assert bits.count <= len(points)


class TestPanopticMap:
    def test_grid_ids_must_be_in_table(self):
        with pytest.raises(ValueError):
            PanopticMap([[0, 1]], {0: SegmentInfo("a", True)})

    def test_needs_a_segment(self):
        with pytest.raises(ValueError):
            PanopticMap([[0]], {})

    def test_rejects_negative_ids(self):
        with pytest.raises(ValueError):
            PanopticMap([[-1]], {0: SegmentInfo("a", True)})


class TestBinaryFixationMap:
    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            BinaryFixationMap([[0, 2]])

    def test_all_zero_is_a_valid_value(self):
        assert BinaryFixationMap(np.zeros((2, 2), int)).count == 0


class TestEvalFrame:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            EvalFrame(
                predicted=SaliencyMap(np.ones((2, 2))),
                ground_truth=SaliencyMap(np.ones((2, 3))),
                fixations=BinaryFixationMap(np.zeros((2, 2), int)),
                panoptic=PanopticMap(np.zeros((2, 2), int), {0: SegmentInfo("bg", False)}),
            )
