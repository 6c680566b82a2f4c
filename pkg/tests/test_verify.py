#!/usr/bin/env python
# -*- coding: utf-8 -*-

import csv
import io
import json
import math
import unittest
from unittest import mock

import numpy

if __name__ == '__main__':
    import numtest
else:
    from . import numtest

from hicontrast import fieldgen
from hicontrast.coarsegrain import DefectCurve, coarse_defect
from hicontrast.fem import DiscreteFunction, SolveConfig, homogenized_periodic
from hicontrast.geometry import Domain
from hicontrast.harmonics import Polynomial
from hicontrast.verify import AffineBoundary, PolynomialBoundary, \
    RandomSmoothBoundary, VerificationRecord, caccioppoli_profile, \
    caccioppoli_ratio, corrector_space_dimension, excess_decay_curve, \
    harmonic_approx_error, liouville_two_sided, make_boundary, run_harness, \
    sobolev_control_ratio
from hicontrast.workers import WorkerPool


def identity_field(L_cells = 9):
    return fieldgen.constant_field(2, numpy.eye(2), L_cells = L_cells)


IDENTITY_A = fieldgen.pointwise_A(numpy.eye(2), numpy.zeros((2, 2)))


class BoundaryTest(numtest.TestCase):
    def test_kinds(self):
        affine = make_boundary('affine', 2, 9.)
        self.assertIsInstance(affine, AffineBoundary)
        self.assertClose(affine([[2., 5.]]), [2.])
        cubic = make_boundary('polynomial', 2, 3.)
        self.assertIsInstance(cubic, PolynomialBoundary)
        self.assertClose(cubic([[3., 1.]]), [1.])
        self.assertRaises(ValueError, make_boundary, 'fourier', 2, 9.)

    def test_random_is_seeded(self):
        points = numpy.random.default_rng(0).uniform(-4, 4, (10, 2))
        a = RandomSmoothBoundary(3, 2, 9.)
        self.assertClose(a(points), RandomSmoothBoundary(3, 2, 9.)(points))
        self.assertFalse(numpy.allclose(
            a(points), RandomSmoothBoundary(4, 2, 9.)(points)))
        self.assertEqual(a.as_dict()['kind'], 'random-smooth')


class CaccioppoliTest(numtest.TestCase):
    def test_affine_on_constant_field(self):
        # u = x1 everywhere: unit energy over a mean square of 3^2m / 12.
        field = identity_field()
        for m in (1, 2):
            ratio = caccioppoli_ratio(field, m, AffineBoundary([1., 0.]), 1.)
            self.assertClose(ratio, math.sqrt(12.), rtol = 1e-8)

    def test_profile(self):
        field = identity_field()
        ratios, kappa, C = caccioppoli_profile(field, 2,
            AffineBoundary([0., 1.]), 1., [1 / 3., 2 / 3.])
        self.assertClose(ratios, [math.sqrt(12.)] * 2, rtol = 1e-8)
        self.assertClose(kappa, 0., atol = 1e-8)
        self.assertClose(C, math.sqrt(12.), rtol = 1e-8)

    def test_contrast_is_bounded(self):
        field = fieldgen.checkerboard(2, 27, 1., 100., 0.5, seed = 1)
        boundary = make_boundary('random', 2, 9., seed = 1)
        ratio = caccioppoli_ratio(field, 2, boundary, 1.)
        self.assertTrue(numpy.isfinite(ratio))
        self.assertGreater(ratio, 0.)

    def test_scaling_covariance(self):
        field = fieldgen.checkerboard(2, 27, 1., 9., 0.5, seed = 5)
        boundary = make_boundary('random', 2, 9., seed = 5)
        ratio = caccioppoli_ratio(field, 2, boundary, 3.)
        for alpha in (0.1, 10.):
            scaled = field.scaled(alpha)
            self.assertClose(
                caccioppoli_ratio(scaled, 2, boundary, 3. * alpha),
                ratio, rtol = 1e-8)

    def test_invalid(self):
        field = identity_field()
        self.assertRaises(ValueError, caccioppoli_ratio,
            field, 0, AffineBoundary([1., 0.]), 1.)
        self.assertRaises(ValueError, caccioppoli_ratio,
            field, 1, AffineBoundary([0., 0.]), 1.)


class ApproximationTest(numtest.TestCase):
    def test_constant_field_has_no_error(self):
        field = identity_field()
        boundary = AffineBoundary([1., 0.])
        l2, hs, energy = harmonic_approx_error(field, 2, IDENTITY_A, 0.4,
            boundary)
        self.assertLess(l2, 1e-8)
        self.assertLess(hs, 1e-8)
        self.assertClose(energy, 1., rtol = 1e-8)
        self.assertLess(
            sobolev_control_ratio(field, 2, IDENTITY_A, 0.4, boundary), 1e-8)

    def test_reverse_needs_harmonic_data(self):
        field = identity_field()
        self.assertRaises(ValueError, harmonic_approx_error, field, 1,
            IDENTITY_A, 0.4, AffineBoundary([1., 0.]), direction = 'reverse')
        cubic = make_boundary('polynomial', 2, 3.)
        self.assertRaises(ValueError, harmonic_approx_error, field, 1,
            IDENTITY_A, 0.4, cubic, direction = 'reverse')
        self.assertRaises(ValueError, harmonic_approx_error, field, 1,
            IDENTITY_A, 0.4, cubic, direction = 'sideways')

    def test_reverse_direction(self):
        x = Polynomial.variable(2, 0)
        y = Polynomial.variable(2, 1)
        boundary = PolynomialBoundary(x * y)
        l2, hs, energy = harmonic_approx_error(identity_field(), 1,
            IDENTITY_A, 0.4, boundary, direction = 'reverse')
        self.assertLess(l2, 1e-8)
        self.assertGreater(energy, 0.)


class ExcessTest(numtest.TestCase):
    def setUp(self):
        numtest.TestCase.setUp(self)
        self.field = identity_field()
        domain = Domain.box((-7, -7), (15, 15))
        self.u = DiscreteFunction.interpolate(
            lambda x: 2 * x[:, 0] - x[:, 1] + 1, domain)

    def test_affine_has_no_first_order_excess(self):
        curve = excess_decay_curve(self.field, self.u, 1, [3, 5])
        self.assertEqual(curve['radii'], [3, 5])
        for excess in curve['excess']:
            self.assertLess(excess, 1e-9)

    def test_constant_excess_grows(self):
        curve = excess_decay_curve(self.field, self.u, 0, [3, 6])
        self.assertGreater(curve['excess'][1], curve['excess'][0])
        self.assertGreater(curve['ratios'][0], 1.)

    def test_adding_harmonic_polynomials(self):
        # x1 x2 and the affine functions are harmonic for s_bar = I.
        domain = Domain.box((-7, -7), (15, 15))
        f = lambda x: numpy.sin(0.3 * x[:, 0]) * numpy.exp(0.2 * x[:, 1])
        for k, p in [
                (1, lambda x: 3 + 2 * x[:, 0] - x[:, 1]),
                (2, lambda x: 3 + 2 * x[:, 0] - x[:, 1] + x[:, 0] * x[:, 1])]:
            u = DiscreteFunction.interpolate(f, domain)
            v = DiscreteFunction.interpolate(lambda x: f(x) + p(x), domain)
            expected = excess_decay_curve(self.field, u, k, [3, 5])['excess']
            actual = excess_decay_curve(self.field, v, k, [3, 5])['excess']
            self.assertClose(actual, expected, rtol = 1e-8, atol = 1e-12)
            self.assertGreater(min(expected), 0.)

    def test_small_radius(self):
        self.assertRaises(ValueError,
            excess_decay_curve, self.field, self.u, 1, [2, 5])


class CorrectorSpaceTest(numtest.TestCase):
    def test_one_dimension(self):
        for field in (fieldgen.laminate(1, 0, 1., 4., L_cells = 9),
                fieldgen.checkerboard(1, 9, 1., 9., 0.5, seed = 2)):
            count, singular, gap = corrector_space_dimension(field, 0)
            self.assertEqual(count, 1)
            count, singular, gap = corrector_space_dimension(field, 1)
            self.assertEqual(count, 2)
            self.assertEqual(len(singular), 3)
            self.assertGreater(gap, 1e3)

    def test_dimensions(self):
        for field in (identity_field(3),
                fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed = 6)):
            count, singular, gap = corrector_space_dimension(field, 1)
            self.assertEqual(count, 3)
            self.assertEqual(len(singular), 5)
            self.assertGreater(gap, 1e3)
            count, singular, gap = corrector_space_dimension(field, 0)
            self.assertEqual(count, 1)

    def test_invalid(self):
        self.assertRaises(ValueError,
            corrector_space_dimension, identity_field(3), 2)


class LiouvilleTest(numtest.TestCase):
    def test_constant_field(self):
        record = liouville_two_sided(identity_field(), 1, [1, 2])
        self.assertEqual(record.harness, 'liouville')
        rows = record.measurements
        self.assertEqual(len(rows), 6)
        self.assertEqual(sorted(set(row['basis'] for row in rows)),
            ['constant', 'x1', 'x2'])
        for row in rows:
            self.assertLess(row['left'], 1e-10)
            self.assertLess(row['residual'], 1e-8)

    def test_corrected_affine_is_harmonic(self):
        field = fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed = 8)
        rows = liouville_two_sided(field, 1, [1, 2]).measurements
        for row in rows:
            self.assertLess(row['residual'], 1e-6)
        corrected = [row for row in rows if row['basis'] != 'constant']
        self.assertTrue(all(row['left'] > 0 for row in corrected))

    def test_defect_curve_shrinks_the_bound(self):
        # (X / 3^n)^(theta / 2) |s_bar^1/2 e| with theta = 1 and X = 3.
        field = fieldgen.laminate(2, 0, 1., 4., L_cells = 9)
        A_bar = fieldgen.pointwise_A(numpy.diag([1.6, 2.5]), numpy.zeros((2, 2)))
        defects = DefectCurve(2, {}, 0., 0.4, 1., 1., 3., [])
        record = liouville_two_sided(field, 1, [1, 2], A_bar, defects)
        rows = record.measurements
        right = dict(
            (row['scale'], row['right']) for row in rows
            if row['basis'] == 'x1')
        self.assertClose(right[1], math.sqrt(1.6), rtol = 1e-12)
        self.assertClose(right[2], math.sqrt(1.6 / 3.), rtol = 1e-12)
        for row in rows:
            self.assertEqual(row['theta_hat'], 1.)
            self.assertEqual(row['X_hat'], 3.)

    def test_degree(self):
        self.assertRaises(ValueError,
            liouville_two_sided, identity_field(), 2, [1])


class HarnessTest(numtest.TestCase):
    def setUp(self):
        numtest.TestCase.setUp(self)
        self.pool = WorkerPool(1)

    def tearDown(self):
        self.pool.close()
        numtest.TestCase.tearDown(self)

    def test_caccioppoli_verdict(self):
        fields = [identity_field()]
        settings = {'m': 1, 'boundary': 'affine', 'lambda_bar': 1.,
            'max_ratio': 4.}
        record = run_harness('caccioppoli', fields, settings, pool = self.pool)
        self.assertTrue(record.passed)
        self.assertClose(record.summary['max_ratio'], math.sqrt(12.),
            rtol = 1e-8)
        settings['max_ratio'] = 3.
        record = run_harness('caccioppoli', fields, settings, pool = self.pool)
        self.assertFalse(record.passed)

    def test_caccioppoli_contrast_sweep(self):
        # Soft inclusions in a stiff matrix: same phases and affine data at
        # every contrast, and at contrast 1 the closed form sqrt 12.
        fields = [fieldgen.checkerboard(2, 9, 1., 9., 0.2, seed)
            for seed in range(4)]
        settings = {'m': 2, 'boundary': 'affine',
            'contrasts': [1., 100., 1e4]}
        record = run_harness('caccioppoli', fields, settings, pool = self.pool)
        self.assertTrue(record.passed, record.summary)
        self.assertEqual(len(record.measurements), 12)
        maxima = record.summary['max_ratio_by_contrast']
        self.assertEqual(sorted(maxima), ['1.0', '100.0', '10000.0'])
        self.assertClose(maxima['1.0'], math.sqrt(12.), rtol = 1e-8)
        self.assertLessEqual(maxima['10000.0'], 3 * maxima['1.0'])
        self.assertClose(record.summary['contrast_growth'],
            maxima['10000.0'] / maxima['1.0'])

        settings['contrast_factor'] = 1e-3
        record = run_harness('caccioppoli', fields, settings, pool = self.pool)
        self.assertFalse(record.passed)

    def test_liouville_uses_defect_curve(self):
        field = fieldgen.laminate(2, 0, 1., 4., L_cells = 9)
        record = run_harness('liouville', [field], {'k': 1, 'scales': [1, 2]},
            pool = self.pool)
        self.assertEqual(len(record.measurements), 6)
        a_bar = homogenized_periodic(field)
        A_bar = fieldgen.pointwise_A(0.5 * (a_bar + a_bar.T),
            0.5 * (a_bar - a_bar.T))
        defects = coarse_defect(field, 2, None, A_bar, SolveConfig())
        theta, X = defects.theta_hat, defects.X_hat
        bounded = numpy.isfinite(theta) and numpy.isfinite(X)
        for row in record.measurements:
            self.assertEqual(repr(row['theta_hat']), repr(theta))
            self.assertEqual(repr(row['X_hat']), repr(X))
            if row['basis'] != 'x1':
                continue
            scale = (X / 3. ** row['scale']) ** (theta / 2) if bounded else 1.
            self.assertClose(row['right'], scale * math.sqrt(1.6), rtol = 1e-6)

    def test_local_pool_is_closed(self):
        fields = [identity_field(3)]
        with mock.patch.object(WorkerPool, 'close', autospec = True) as close:
            run_harness('dims', fields, {'k': 0})
            self.assertEqual(close.call_count, 1)
            run_harness('dims', fields, {'k': 0}, pool = self.pool)
            self.assertEqual(close.call_count, 1)

    def test_dims(self):
        fields = [fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed)
            for seed in (0, 1)]
        record = run_harness('dims', fields, {'k': 1}, pool = self.pool)
        self.assertTrue(record.passed)
        self.assertEqual(record.failures, 0)
        self.assertEqual(len(record.measurements), 2)
        self.assertEqual(record.summary['dimensions'], [3])
        self.assertEqual(record.metadata['seeds'], [0, 1])

    def test_invalid(self):
        fields = [identity_field()]
        self.assertRaises(ValueError,
            run_harness, 'excess', fields, {'radii': [2, 5]})
        self.assertRaises(ValueError, run_harness, 'moments', fields, {})


class RecordTest(numtest.TestCase):
    def setUp(self):
        numtest.TestCase.setUp(self)
        self.record = VerificationRecord('excess', {'seeds': [0]},
            [{'seed': 0, 'radius': 3, 'excess': 0.5},
             {'seed': 0, 'radius': 9, 'excess': float('nan')}],
            {'max_excess': float('nan')}, False)

    def test_json(self):
        output = io.StringIO()
        self.record.write_json(output, {'command': 'verify'})
        document = json.loads(output.getvalue())
        self.assertEqual(document['verdict'], 'FAIL')
        self.assertEqual(document['command'], 'verify')
        self.assertEqual(document['summary']['max_excess'], 'nan')

    def test_csv(self):
        output = io.StringIO(newline = '')
        self.record.write_csv(output)
        rows = list(csv.reader(io.StringIO(output.getvalue(), newline = '')))
        self.assertEqual(rows[0], ['excess', 'radius', 'seed'])
        self.assertEqual(rows[1], ['0.5', '3', '0'])
        self.assertEqual(rows[2][0], 'nan')


if __name__ == '__main__':
    unittest.main()
