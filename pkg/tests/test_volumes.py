import math

import numpy as np
import pytest

import contourloss as cl
from contourloss import DomainError


class TestDims:
    def test_voxel_count(self):
        assert cl.Dims(2, 3, 4).n == 24
        assert cl.Dims(2, 3, 4).shape == (2, 3, 4)

    @pytest.mark.parametrize("bad", [(0, 1, 1), (1, -2, 1), (1, 1, 0)])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(DomainError):
            cl.Dims(*bad)


class TestLabelVolume:
    def test_rejects_out_of_range_labels(self):
        with pytest.raises(DomainError):
            cl.LabelVolume.from_array(np.full((2, 2, 2), 5, dtype=np.uint8), num_classes=3)

    def test_rejects_too_few_classes(self):
        with pytest.raises(DomainError):
            cl.LabelVolume.from_array(np.zeros((2, 2, 2), dtype=np.uint8), num_classes=1)

    def test_present_and_foreground_classes(self):
        labels = np.zeros((3, 3, 3), dtype=np.uint8)
        labels[0, 0, 0] = 2
        vol = cl.LabelVolume.from_array(labels, num_classes=4)
        assert vol.present_classes() == [0, 2]
        assert vol.foreground_classes() == [2]

    def test_immutable_after_construction(self):
        vol = cl.LabelVolume.from_array(np.zeros((2, 2, 2), dtype=np.uint8))
        with pytest.raises(ValueError):
            vol.voxels[0, 0, 0] = 1

    def test_source_array_is_copied(self):
        src = np.zeros((2, 2, 2), dtype=np.uint8)
        vol = cl.LabelVolume.from_array(src, num_classes=2)
        src[0, 0, 0] = 1
        assert vol.voxels[0, 0, 0] == 0


class TestBinaryMask:
    def test_rejects_non_binary(self):
        with pytest.raises(DomainError):
            cl.BinaryMask.from_array(np.full((2, 2, 2), 2, dtype=np.uint8))

    def test_count(self):
        arr = np.zeros((2, 2, 2), dtype=np.uint8)
        arr[0, 1, 1] = 1
        assert cl.BinaryMask.from_array(arr).count() == 1


class TestProbVolume:
    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            cl.ProbVolume.from_array(np.full((2, 2, 2, 2), 1.5))

    def test_rejects_nan(self):
        values = np.full((2, 2, 2, 2), 0.5)
        values[0, 0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            cl.ProbVolume.from_array(values)

    def test_normalized_flag_checks_channel_sums(self):
        values = np.full((2, 2, 2, 2), 0.4)
        with pytest.raises(DomainError):
            cl.ProbVolume.from_array(values, normalized=True)
        ok = cl.ProbVolume.from_array(np.full((2, 2, 2, 2), 0.5), normalized=True)
        assert ok.normalized


class TestScalarVolume:
    def test_rejects_non_finite(self):
        arr = np.zeros((2, 2, 2))
        arr[0, 0, 0] = np.inf
        with pytest.raises(DomainError):
            cl.ScalarVolume.from_array(arr)


class TestOneHot:
    def test_all_zero_labels_class0_is_all_ones(self):
        labels = cl.LabelVolume.from_array(np.zeros((3, 3, 3), dtype=np.uint8))
        assert cl.one_hot(labels, 0).count() == 27

    def test_all_zero_labels_class1_is_all_zeros(self):
        labels = cl.LabelVolume.from_array(np.zeros((3, 3, 3), dtype=np.uint8), num_classes=2)
        assert cl.one_hot(labels, 1).count() == 0

    def test_single_voxel_against_enumeration_oracle(self):
        arr = np.zeros((2, 3, 4), dtype=np.uint8)
        arr.reshape(-1)[7] = 3
        labels = cl.LabelVolume.from_array(arr, num_classes=4)
        mask = cl.one_hot(labels, 3)
        # direct enumeration over every voxel
        flat_labels = labels.voxels.reshape(-1)
        flat_mask = mask.bits.reshape(-1)
        for i in range(labels.dims.n):
            assert flat_mask[i] == (1 if flat_labels[i] == 3 else 0)
        assert flat_mask[7] == 1 and flat_mask.sum() == 1

    def test_out_of_range_class(self):
        labels = cl.LabelVolume.from_array(np.zeros((2, 2, 2), dtype=np.uint8), num_classes=2)
        with pytest.raises(DomainError):
            cl.one_hot(labels, 2)
        with pytest.raises(DomainError):
            cl.one_hot(labels, -1)

    def test_masks_partition_the_volume(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            num_classes = int(rng.integers(2, 5))
            labels = cl.LabelVolume.from_array(
                rng.integers(0, num_classes, (4, 5, 6)).astype(np.uint8), num_classes)
            stack = np.stack([cl.one_hot(labels, c).bits for c in range(num_classes)])
            assert (stack.sum(axis=0) == 1).all()


class TestZscoreNormalize:
    def test_constant_volume_maps_to_zeros(self):
        vol = cl.ScalarVolume.from_array(np.full((3, 3, 3), 5.0))
        out = cl.zscore_normalize(vol)
        assert (out.values == 0.0).all()

    def test_two_voxel_hand_computation(self):
        # mu = 1, population sigma = 1  ->  [-1, 1]
        vol = cl.ScalarVolume.from_array(np.array([0.0, 2.0]).reshape(1, 1, 2))
        out = cl.zscore_normalize(vol)
        np.testing.assert_allclose(out.values.reshape(-1), [-1.0, 1.0], atol=1e-12)

    def test_output_is_standardized(self):
        rng = np.random.default_rng(11)
        vol = cl.ScalarVolume.from_array(rng.normal(3.0, 2.5, (6, 7, 8)))
        out = cl.zscore_normalize(vol)
        assert abs(out.values.mean()) < 1e-6
        assert abs(out.values.std() - 1.0) < 1e-6

    def test_affine_shift_invariance(self):
        rng = np.random.default_rng(12)
        base = rng.normal(0.0, 1.0, (5, 5, 5))
        ref = cl.zscore_normalize(cl.ScalarVolume.from_array(base))
        for a, b in ((2.0, 3.0), (0.25, -10.0), (7.5, 0.0)):
            out = cl.zscore_normalize(cl.ScalarVolume.from_array(a * base + b))
            np.testing.assert_allclose(out.values, ref.values, atol=1e-6)


class TestReduceSum:
    def test_empty(self):
        assert cl.reduce_sum([]) == 0.0

    def test_thousand_ones_exact(self):
        assert cl.reduce_sum([1.0] * 1000) == 1000.0

    def test_bit_identical_repeats(self):
        rng = np.random.default_rng(13)
        data = rng.normal(0.0, 1.0, 1_000_000)
        first = cl.reduce_sum(data)
        second = cl.reduce_sum(data)
        assert math.isfinite(first)
        assert first == second

    def test_exactness_against_fractions(self):
        # fsum is exactly rounded; spot-check against exact rational arithmetic
        from fractions import Fraction
        rng = np.random.default_rng(14)
        data = rng.normal(0.0, 1.0, 501)
        exact = float(sum(Fraction(x) for x in data.tolist()))
        assert cl.reduce_sum(data) == pytest.approx(exact, abs=0.0, rel=1e-15)

    def test_nan_rejected(self):
        with pytest.raises(DomainError):
            cl.reduce_sum([1.0, float("nan")])
