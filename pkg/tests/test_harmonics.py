#!/usr/bin/env python
# -*- coding: utf-8 -*-

import itertools
import json
import unittest
from fractions import Fraction

import numpy

if __name__ == '__main__':
    import numtest
else:
    from . import numtest

from hicontrast.geometry import Domain
from hicontrast.harmonics import Polynomial, abar_harmonic_basis, \
    ball_mean_square, dim_formula, euclidean_harmonics, homogeneous_part, \
    project_onto_Abar_k, sphere_inner_product


X = Polynomial.variable(2, 0)
Y = Polynomial.variable(2, 1)


class PolynomialTest(numtest.TestCase):
    def test_arithmetic(self):
        p = (X + Y) ** 2
        self.assertEqual(p.coefficient((1, 1)), 2)
        self.assertEqual(p.degree, 2)
        self.assertTrue((p - p).is_zero())
        self.assertEqual((p - p).degree, -1)
        self.assertEqual(p * Fraction(1, 2), Fraction(1, 2) * p)

    def test_derivatives(self):
        p = X ** 3 - 3 * X * Y ** 2
        self.assertEqual(p.derivative(0), 3 * X ** 2 - 3 * Y ** 2)
        self.assertTrue(p.laplacian().is_zero())
        q = X * Y
        self.assertEqual(q.divergence_form([[1, 2], [0, 1]]),
            Polynomial.constant(2, 2))

    def test_scale_and_compose(self):
        self.assertEqual((X ** 2 + Y).scale(2), 4 * X ** 2 + 2 * Y)
        swapped = (X ** 2 + 3 * Y).compose_linear([[0, 1], [1, 0]])
        self.assertEqual(swapped, Y ** 2 + 3 * X)

    def test_homogeneous_part(self):
        p = Polynomial.constant(2, 5) + X - Y + X * Y
        self.assertEqual(homogeneous_part(p, 1), X - Y)
        self.assertTrue(homogeneous_part(p, 4).is_zero())
        self.assertRaises(ValueError, homogeneous_part, p, -1)

    def test_evaluate(self):
        p = X ** 2 - 2 * Y
        self.assertClose(p.evaluate([[1., 2.], [3., 0.5]]), [-3., 8.])


class DimensionTest(numtest.TestCase):
    def test_dim_formula(self):
        expected = {
            (1, 0): 1, (1, 1): 2, (1, 3): 2,
            (2, 0): 1, (2, 1): 3, (2, 2): 5, (3, 2): 9}
        for (d, k), value in expected.items():
            self.assertEqual(dim_formula(d, k), value)

    def test_basis_sizes(self):
        for d in (1, 2):
            s_bar = numpy.eye(d)
            for k in range(4):
                basis = abar_harmonic_basis(d, k, s_bar)
                self.assertEqual(len(basis), dim_formula(d, k))
                self.assertTrue(basis.is_harmonic())

    def test_euclidean_harmonics(self):
        real, imaginary = euclidean_harmonics(2, 3)
        self.assertEqual(real, X ** 3 - 3 * X * Y ** 2)
        self.assertEqual(imaginary, 3 * X ** 2 * Y - Y ** 3)
        self.assertEqual(euclidean_harmonics(1, 2), [])

    def test_anisotropic(self):
        s_bar = [[2., 0.5], [0.5, 1.]]
        basis = abar_harmonic_basis(2, 3, s_bar)
        self.assertEqual(basis.method, 'nullspace')
        self.assertEqual(len(basis), 7)
        self.assertTrue(basis.is_harmonic())

    def test_substitution_matches_nullspace(self):
        s_bar = numpy.diag([4., 1.])
        q0 = numpy.diag([2., 1.])
        substituted = abar_harmonic_basis(2, 3, s_bar, q0)
        direct = abar_harmonic_basis(2, 3, s_bar)
        self.assertEqual(substituted.method, 'substitution')
        self.assertEqual(direct.method, 'nullspace')
        self.assertEqual(len(substituted), len(direct))
        self.assertTrue(substituted.is_harmonic())
        # Same span degree by degree.
        points = numpy.random.default_rng(3).standard_normal((40, 2))
        for degree in range(4):
            a = numpy.stack([p.evaluate(points)
                for p, n in zip(substituted, substituted.degrees)
                if n == degree], axis = 1)
            b = numpy.stack([p.evaluate(points)
                for p, n in zip(direct, direct.degrees) if n == degree],
                axis = 1)
            self.assertEqual(numpy.linalg.matrix_rank(
                numpy.hstack([a, b]), tol = 1e-8), a.shape[1])

    def test_non_proportional_q0_falls_back(self):
        basis = abar_harmonic_basis(2, 2, numpy.diag([3., 1.]), numpy.eye(2))
        self.assertEqual(basis.method, 'nullspace')

    def test_json(self):
        basis = abar_harmonic_basis(2, 2, numpy.eye(2))
        document = json.loads(basis.to_json())
        self.assertEqual(document['k'], 2)
        self.assertEqual(len(document['elements']), 5)
        self.assertEqual(
            [e['degree'] for e in document['elements']], basis.degrees)

    def test_invalid(self):
        self.assertRaises(ValueError, abar_harmonic_basis, 3, 1, numpy.eye(3))
        self.assertRaises(ValueError, abar_harmonic_basis, 2, 1,
            [[1., 2.], [0., 1.]])
        self.assertRaises(ValueError, abar_harmonic_basis, 2, 1,
            -numpy.eye(2))


class SphereTest(numtest.TestCase):
    def test_homogeneous_parts_are_orthogonal(self):
        basis = abar_harmonic_basis(2, 4, numpy.eye(2))
        pairs = zip(basis, basis.degrees)
        for (p, m), (q, n) in itertools.combinations(pairs, 2):
            if m == n:
                continue
            for radius in (1., 3.):
                self.assertLess(
                    abs(sphere_inner_product(p, q, radius)), 1e-10)

    def test_scaling_identity(self):
        # For harmonic u the mean square on B_1 splits into the homogeneous
        # parts on B_2 weighted by 4^-j.
        basis = abar_harmonic_basis(2, 3, numpy.eye(2))
        coefficients = numpy.random.default_rng(7).standard_normal(len(basis))
        u = basis.combine([Fraction(float(c)) for c in coefficients])
        split = sum(4. ** -j * ball_mean_square(homogeneous_part(u, j), 2.)
            for j in range(4))
        self.assertClose(ball_mean_square(u, 1.), split, rtol = 1e-8)

    def test_one_dimensional(self):
        u = Polynomial.constant(1, 2) + Polynomial.variable(1, 0) * 3
        # Mean of (2 + 3x)^2 over (-1, 1).
        self.assertClose(ball_mean_square(u), 7., rtol = 1e-12)
        self.assertClose(sphere_inner_product(u, u), 13., rtol = 1e-12)

    def test_constant(self):
        one = Polynomial.constant(2, 1)
        self.assertClose(ball_mean_square(one, 5.), 1., rtol = 1e-12)
        self.assertClose(sphere_inner_product(one, one, 5.), 1., rtol = 1e-12)


class ProjectionTest(numtest.TestCase):
    def setUp(self):
        numtest.TestCase.setUp(self)
        self.region = Domain.box((-4, -4), (9, 9))
        self.basis = abar_harmonic_basis(2, 2, numpy.eye(2))

    def test_harmonic_is_reproduced(self):
        target = X ** 2 - Y ** 2 + 3 * X - 1
        polynomial, residual = project_onto_Abar_k(
            target.evaluate, self.region, 2, self.basis)
        self.assertLess(residual, 1e-9)
        points = numpy.random.default_rng(1).uniform(-4, 4, (20, 2))
        self.assertClose(polynomial.evaluate(points), target.evaluate(points),
            atol = 1e-8)

    def test_lower_degree(self):
        target = X ** 2 - Y ** 2
        polynomial, residual = project_onto_Abar_k(
            target.evaluate, self.region, 1, self.basis)
        self.assertLessEqual(polynomial.degree, 1)
        self.assertGreater(residual, 1.)

    def test_degree_outside_basis(self):
        self.assertRaises(ValueError, project_onto_Abar_k,
            X.evaluate, self.region, 3, self.basis)


if __name__ == '__main__':
    unittest.main()
