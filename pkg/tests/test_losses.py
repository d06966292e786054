import math
from dataclasses import replace

import numpy as np
import pytest

import contourloss as cl
from contourloss import ContourSpec, DomainError, LossConfig
from contourloss.gradcheck import CheckConfig, finite_diff_gradient, gradient_errors

from conftest import cube_labels, one_hot_prediction

CFG1 = LossConfig(contour_spec=ContourSpec(iterations=1))


def check_gradient(loss_fn, pred, truth, analytical, rel_tol=1e-4):
    cfg = CheckConfig(step=1e-4, rel_tol=rel_tol)
    numerical = finite_diff_gradient(lambda p, t: loss_fn(p, t), pred, truth, cfg)
    err, coord = gradient_errors(analytical, numerical, cfg)
    assert err < rel_tol, f"gradient mismatch {err:.3e} at {coord}"


class TestDsc:
    def test_identity_prediction(self):
        mask = cl.one_hot(cube_labels(), 1)
        n = mask.count()
        assert cl.dsc(mask, mask) == pytest.approx(2 * n / (2 * n + 1e-5), abs=0.0)

    def test_disjoint_prediction_is_zero(self):
        a = np.zeros((3, 3, 3), dtype=np.uint8)
        b = np.zeros((3, 3, 3), dtype=np.uint8)
        a[0, 0, 0] = 1
        b[2, 2, 2] = 1
        assert cl.dsc(cl.BinaryMask.from_array(a), cl.BinaryMask.from_array(b)) == 0.0

    def test_half_overlap_hand_value(self):
        # truth has 8 ones, prediction covers 4 of them with no false positives:
        # 2*4 / (4 + 8 + eps)
        truth = np.zeros((2, 2, 4), dtype=np.uint8)
        truth[:, :, :2] = 1
        pred = np.zeros((2, 2, 4), dtype=np.uint8)
        pred[:, 0, :2] = 1
        value = cl.dsc(cl.BinaryMask.from_array(pred), cl.BinaryMask.from_array(truth))
        assert value == pytest.approx(8.0 / (12.0 + 1e-5), rel=1e-12)
        assert value == pytest.approx(2 / 3, rel=1e-4)

    def test_range_on_random_probabilities(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            g = cl.BinaryMask.from_array((rng.random((4, 4, 4)) < 0.5).astype(np.uint8))
            p = rng.random((4, 4, 4))
            assert 0.0 <= cl.dsc(p, g) <= 1.0

    def test_dim_mismatch(self):
        with pytest.raises(DomainError):
            cl.dsc(np.zeros((2, 2, 2)), cl.BinaryMask.from_array(np.zeros((3, 3, 3), dtype=np.uint8)))


class TestDiceLoss:
    def test_perfect_prediction_near_zero(self):
        truth = cube_labels()  # 343-voxel object
        report = cl.dice_loss(one_hot_prediction(truth), truth, CFG1)
        assert report.total < 1e-4

    def test_all_zero_prediction_is_one(self):
        truth = cube_labels()
        values = np.zeros((2,) + truth.dims.shape)
        values[0] = 1.0  # background confident, object channel all zero
        pred = cl.ProbVolume.from_array(values)
        report = cl.dice_loss(pred, truth, CFG1)
        assert report.total == pytest.approx(1.0, abs=1e-12)

    def test_no_foreground_errors(self):
        truth = cl.LabelVolume.from_array(np.zeros((3, 3, 3), dtype=np.uint8), num_classes=2)
        pred = cl.ProbVolume.from_array(np.full((2, 3, 3, 3), 0.5))
        with pytest.raises(DomainError, match="no target regions"):
            cl.dice_loss(pred, truth, CFG1)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(32)
        pred, truth = cl.random_instance(rng, min_extent=8, max_extent=8)
        report = cl.dice_loss(pred, truth, CFG1, with_gradient=True)
        check_gradient(lambda p, t: cl.dice_loss(p, t, CFG1).total, pred, truth, report.gradient)

    def test_absent_classes_are_skipped(self):
        labels = np.zeros((4, 4, 4), dtype=np.uint8)
        labels[1:3, 1:3, 1:3] = 2
        truth = cl.LabelVolume.from_array(labels, num_classes=4)
        pred = cl.ProbVolume.from_array(np.full((4, 4, 4, 4), 0.25))
        report = cl.dice_loss(pred, truth, CFG1, with_gradient=True)
        assert report.class_ids == (2,)
        assert report.skipped_classes == (1, 3)
        assert (report.gradient[1] == 0.0).all() and (report.gradient[3] == 0.0).all()
        assert (report.gradient[0] == 0.0).all()  # background never enters the average


class TestSeparableDiceLoss:
    def test_lambda_half_is_exact_midpoint(self):
        rng = np.random.default_rng(33)
        pred, truth = cl.random_instance(rng, min_extent=6, max_extent=8)
        report = cl.separable_dice_loss(pred, truth, CFG1)
        assert report.sdl_term == (report.contour_term + report.noncontour_term) / 2.0

    def test_perfect_prediction_near_zero(self):
        truth = cube_labels()
        report = cl.separable_dice_loss(one_hot_prediction(truth), truth, CFG1)
        assert report.contour_term < 1e-3
        assert report.noncontour_term < 1e-3
        assert report.total < 1e-3

    def test_empty_interior_skips_class_and_reduces_to_full_dice(self):
        # 3-voxel-thick slab is fully consumed by 6 erosion passes
        labels = np.zeros((12, 12, 12), dtype=np.uint8)
        labels[4:7, 1:11, 1:11] = 1
        truth = cl.LabelVolume.from_array(labels, num_classes=2)
        cfg = LossConfig(contour_spec=ContourSpec(iterations=6), lam=1.0)
        rng = np.random.default_rng(34)
        # prediction supported on the object so the full-volume dice agrees
        values = np.zeros((2,) + truth.dims.shape)
        support = labels == 1
        values[1][support] = rng.uniform(0.1, 0.9, int(support.sum()))
        pred = cl.ProbVolume.from_array(values)

        report = cl.separable_dice_loss(pred, truth, cfg)
        assert report.skipped_classes == (1,)
        assert report.noncontour_term == 0.0
        # contour == whole object, so L_c is the object's dice loss
        dice = cl.dice_loss(pred, truth, cfg)
        assert report.contour_term == pytest.approx(dice.total, abs=1e-12)
        assert report.total == pytest.approx(dice.total, abs=1e-12)  # lam = 1

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(35)
        for _ in range(3):
            pred, truth = cl.random_instance(rng, min_extent=5, max_extent=8)
            report = cl.separable_dice_loss(pred, truth, CFG1, with_gradient=True)
            check_gradient(lambda p, t: cl.separable_dice_loss(p, t, CFG1).total,
                           pred, truth, report.gradient)

    def test_paper_literal_numerator_gradient(self):
        cfg = replace(CFG1, numerator_form="paper-literal-p2g2")
        rng = np.random.default_rng(36)
        pred, truth = cl.random_instance(rng, min_extent=6, max_extent=7)
        report = cl.separable_dice_loss(pred, truth, cfg, with_gradient=True)
        check_gradient(lambda p, t: cl.separable_dice_loss(p, t, cfg).total,
                       pred, truth, report.gradient)

    def test_numerator_forms_differ_on_soft_predictions(self):
        rng = np.random.default_rng(37)
        pred, truth = cl.random_instance(rng, min_extent=6, max_extent=6)
        standard = cl.separable_dice_loss(pred, truth, CFG1).total
        literal = cl.separable_dice_loss(
            pred, truth, replace(CFG1, numerator_form="paper-literal-p2g2")).total
        assert standard != literal


class TestCrossEntropy:
    def test_uniform_weights_equal_unweighted_exactly(self):
        rng = np.random.default_rng(38)
        pred, truth = cl.random_instance(rng)
        ones = cl.ScalarVolume.from_array(np.ones(truth.dims.shape))
        a = cl.cross_entropy(pred, truth, None, CFG1)
        b = cl.cross_entropy(pred, truth, ones, CFG1)
        assert a.total == b.total

    def test_perfect_prediction_clamp_bound(self):
        truth = cube_labels()
        report = cl.cross_entropy(one_hot_prediction(truth), truth, None, CFG1)
        bound = -math.log(1.0 - CFG1.prob_clamp)
        assert 0.0 <= report.total <= bound
        assert report.total < 1e-5

    def test_single_voxel_hand_value(self):
        # one voxel, 2 classes, p = (0.25, 0.75), truth class 1, weight 2:
        # the voxel term is -2*log(0.75); normalization divides by M_total*N = 2
        truth = cl.LabelVolume.from_array(np.ones((1, 1, 1), dtype=np.uint8), num_classes=2)
        pred = cl.ProbVolume.from_array(np.array([0.25, 0.75]).reshape(2, 1, 1, 1))
        weight = cl.ScalarVolume.from_array(np.full((1, 1, 1), 2.0))
        report = cl.cross_entropy(pred, truth, weight, CFG1)
        voxel_term = -2.0 * math.log(0.75)
        assert voxel_term == pytest.approx(0.5754, abs=1e-4)
        assert report.total == pytest.approx(voxel_term / 2.0, rel=1e-12)

    def test_rejects_nonpositive_weights(self):
        truth = cube_labels()
        pred = one_hot_prediction(truth)
        bad = cl.ScalarVolume.from_array(np.zeros(truth.dims.shape))
        with pytest.raises(DomainError):
            cl.cross_entropy(pred, truth, bad, CFG1)

    def test_clamp_keeps_exact_zero_finite(self):
        truth = cube_labels()
        values = np.zeros((2,) + truth.dims.shape)
        values[0] = 1.0  # object channel exactly 0 where truth is 1
        pred = cl.ProbVolume.from_array(values)
        report = cl.cross_entropy(pred, truth, None, CFG1)
        assert math.isfinite(report.total)
        assert report.total > 0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(39)
        pred, truth = cl.random_instance(rng, min_extent=6, max_extent=8)
        wmap = cl.build_weight_map(truth, CFG1.contour_spec, 2.0)
        report = cl.cross_entropy(pred, truth, wmap, CFG1, with_gradient=True)
        check_gradient(lambda p, t: cl.cross_entropy(p, t, wmap, CFG1).total,
                       pred, truth, report.gradient)

    def test_contour_gain_monotonicity(self):
        rng = np.random.default_rng(40)
        pred, truth = cl.random_instance(rng, min_extent=6, max_extent=6)
        totals = []
        for gain in (1.0, 2.0, 4.0, 8.0):
            cfg = replace(CFG1, contour_gain=gain, variant="CWCE")
            totals.append(cl.evaluate_variant(pred, truth, cfg).total)
        assert totals == sorted(totals)
        assert totals[0] < totals[-1]


class TestCompoundLoss:
    def test_additivity_against_separate_invocations(self):
        rng = np.random.default_rng(41)
        pred, truth = cl.random_instance(rng)
        compound = cl.compound_loss(pred, truth, CFG1)
        sdl = cl.separable_dice_loss(pred, truth, CFG1)
        wmap = cl.build_weight_map(truth, CFG1.contour_spec, CFG1.contour_gain)
        ce = cl.cross_entropy(pred, truth, wmap, CFG1)
        assert compound.total == pytest.approx(sdl.total + ce.total, abs=1e-12)
        assert compound.sdl_term == sdl.total
        assert compound.ce_term == ce.total

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        pred, truth = cl.random_instance(rng, min_extent=6, max_extent=6, max_classes=3)
        report = cl.compound_loss(pred, truth, CFG1, with_gradient=True)
        check_gradient(lambda p, t: cl.compound_loss(p, t, CFG1).total,
                       pred, truth, report.gradient)

    def test_gradient_is_sum_of_component_gradients(self):
        rng = np.random.default_rng(43)
        pred, truth = cl.random_instance(rng)
        compound = cl.compound_loss(pred, truth, CFG1, with_gradient=True)
        sdl = cl.separable_dice_loss(pred, truth, CFG1, with_gradient=True)
        wmap = cl.build_weight_map(truth, CFG1.contour_spec, CFG1.contour_gain)
        ce = cl.cross_entropy(pred, truth, wmap, CFG1, with_gradient=True)
        np.testing.assert_array_equal(compound.gradient, sdl.gradient + ce.gradient)


class TestEvaluateVariant:
    def test_ce_routes_to_unweighted_cross_entropy(self):
        rng = np.random.default_rng(44)
        pred, truth = cl.random_instance(rng)
        via_variant = cl.evaluate_variant(pred, truth, replace(CFG1, variant="CE"))
        direct = cl.cross_entropy(pred, truth, None, CFG1)
        assert via_variant.total == direct.total

    def test_cwce_with_gain_one_equals_ce(self):
        rng = np.random.default_rng(45)
        pred, truth = cl.random_instance(rng)
        cwce = cl.evaluate_variant(pred, truth, replace(CFG1, variant="CWCE", contour_gain=1.0))
        ce = cl.evaluate_variant(pred, truth, replace(CFG1, variant="CE"))
        assert cwce.total == ce.total

    def test_all_variants_finite_and_compositional(self):
        rng = np.random.default_rng(46)
        pred, truth = cl.random_instance(rng)
        totals = {}
        for variant in cl.VARIANTS:
            report = cl.evaluate_variant(pred, truth, replace(CFG1, variant=variant))
            assert math.isfinite(report.total) and report.total >= 0.0
            totals[variant] = report.total
        assert totals["CWCD"] == pytest.approx(totals["SDL"] + totals["CWCE"], abs=1e-12)

    def test_unknown_variant_rejected(self):
        with pytest.raises(DomainError):
            LossConfig(variant="FOCAL")

    def test_dim_and_class_mismatches(self):
        truth = cube_labels()
        with pytest.raises(DomainError):
            cl.evaluate_variant(
                cl.ProbVolume.from_array(np.full((3, 9, 9, 9), 0.3)), truth, CFG1)
        with pytest.raises(DomainError):
            cl.evaluate_variant(
                cl.ProbVolume.from_array(np.full((2, 5, 9, 9), 0.3)), truth, CFG1)


class TestDeterminism:
    def test_bit_identical_reports(self):
        rng = np.random.default_rng(47)
        pred, truth = cl.random_instance(rng)
        for variant in cl.VARIANTS:
            cfg = replace(CFG1, variant=variant)
            a = cl.evaluate_variant(pred, truth, cfg, with_gradient=True)
            b = cl.evaluate_variant(pred, truth, cfg, with_gradient=True)
            assert a.total == b.total
            assert a.per_class_contour == b.per_class_contour
            np.testing.assert_array_equal(a.gradient, b.gradient)
