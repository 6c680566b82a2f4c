#!/usr/bin/env python
# -*- coding: utf-8 -*-

import unittest

import numpy

if __name__ == '__main__':
    import numtest
else:
    from . import numtest

from hicontrast import fieldgen
from hicontrast.fem import DiscreteFunction, EnergyProblem, Mesh, \
    SolveConfig, SolverFailure, homogenized_periodic, linear_solve, \
    minimize_A_energy, solve_dirichlet, solve_periodic_corrector
from hicontrast.geometry import Domain, GeometryError


def affine(x):
    return 2 * x[:, 0] - x[:, 1]


class MeshTest(numtest.TestCase):
    def test_counts(self):
        mesh = Mesh(Domain.box((0, 0), (3, 3)), refine = 2)
        self.assertEqual(mesh.element_count, 36)
        self.assertEqual(mesh.node_count, 49)
        self.assertEqual(int(mesh.interior_nodes.sum()), 25)
        self.assertEqual(int(mesh.boundary_nodes.sum()), 24)

    def test_masked_interior(self):
        mask = numpy.ones((3, 3), dtype = bool)
        mask[1, 1] = False
        mesh = Mesh(Domain((0, 0), mask))
        # The hole has no interior nodes around it.
        self.assertEqual(int(mesh.interior_nodes.sum()), 0)
        self.assertEqual(int(mesh.active_nodes.sum()), 16)

    def test_node_coordinates(self):
        mesh = Mesh(Domain.box((-1,), (2,)), refine = 2)
        self.assertClose(mesh.node_coordinates()[:, 0],
            [-1.5, -1., -0.5, 0., 0.5])

    def test_stiffness_annihilates_constants(self):
        field = fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed = 1)
        mesh = Mesh(Domain.box((0, 0), (9, 9)))
        s, k = mesh.element_coefficients(field)
        K = mesh.assemble((s + k)[:, None, :, None, :])
        self.assertLess(numpy.abs(K @ numpy.ones(mesh.node_count)).max(), 1e-12)
        self.assertClose((K - K.T).toarray(), numpy.zeros(K.shape), atol = 1e-14)


class DiscreteFunctionTest(numtest.TestCase):
    def test_interpolated_affine(self):
        domain = Domain.box((0, 0), (3, 2))
        u = DiscreteFunction.interpolate(affine, domain, refine = 2)
        self.assertClose(u.cell_gradients(),
            numpy.broadcast_to([2., -1.], (3, 2, 2)), atol = 1e-13)
        centres = domain.box_cells().reshape(-1, 2).astype(float)
        self.assertClose(u.cell_values().ravel(), affine(centres), atol = 1e-13)

    def test_arithmetic(self):
        domain = Domain.box((0,), (3,))
        u = DiscreteFunction.interpolate(lambda x: x[:, 0], domain)
        v = (u + u.scaled(2.)) - u
        self.assertClose(v.values, 2 * u.values)
        other = DiscreteFunction.interpolate(
            lambda x: x[:, 0], Domain.box((1,), (3,)))
        self.assertRaises(ValueError, u.__add__, other)


class LinearSolveTest(numtest.TestCase):
    def system(self):
        field = fieldgen.checkerboard(2, 9, 1., 100., 0.5, seed = 3)
        mesh = Mesh(Domain.box((0, 0), (9, 9)))
        s, k = mesh.element_coefficients(field)
        K = mesh.assemble(s[:, None, :, None, :])
        free = mesh.interior_nodes
        rhs = numpy.linspace(-1, 1, mesh.node_count)[free]
        return K[free][:, free], rhs

    def test_kinds_agree(self):
        K, rhs = self.system()
        results = {}
        for kind in ('direct', 'cg', 'krylov'):
            x, infos = linear_solve(K, rhs, SolveConfig(solver_kind = kind))
            self.assertEqual(infos[0].kind, kind)
            self.assertLess(infos[0].residual, 1e-9)
            results[kind] = x
        self.assertRelativeError(results['cg'], results['direct'], 1e-5)
        self.assertRelativeError(results['krylov'], results['direct'], 1e-5)

    def test_multiple_columns(self):
        K, rhs = self.system()
        b = numpy.stack([rhs, 0 * rhs, 2 * rhs], axis = 1)
        x, infos = linear_solve(K, b, SolveConfig())
        self.assertEqual(x.shape, b.shape)
        self.assertTrue(numpy.all(x[:, 1] == 0))
        self.assertRelativeError(x[:, 2], 2 * x[:, 0], 1e-9)
        self.assertEqual(len(infos), 3)

    def test_cg_energy_decreases(self):
        K, rhs = self.system()
        _, infos = linear_solve(K, rhs, SolveConfig(solver_kind = 'cg'))
        energies = numpy.array(infos[0].energies)
        self.assertGreater(len(energies), 2)
        self.assertTrue(numpy.all(
            numpy.diff(energies) <= 1e-12 * numpy.abs(energies[:-1])))

    def test_failure_carries_history(self):
        K, rhs = self.system()
        config = SolveConfig(solver_kind = 'cg', max_iter = 1)
        with self.assertRaises(SolverFailure) as context:
            linear_solve(K, rhs, config)
        failure = context.exception
        self.assertEqual(failure.kind, 'cg')
        self.assertEqual(failure.size, K.shape[0])
        self.assertGreater(failure.residuals[-1], 1e-10)
        self.assertIn('cg solve', str(failure))

    def test_bad_config(self):
        self.assertRaises(ValueError, SolveConfig, tol_rel = 0)
        self.assertRaises(ValueError, SolveConfig, solver_kind = 'multigrid')
        self.assertRaises(ValueError, SolveConfig, refine = 0)
        self.assertEqual(SolveConfig().iteration_cap(10), 500)


class DirichletTest(numtest.TestCase):
    def test_affine_is_reproduced(self):
        field = fieldgen.constant_field(2, numpy.diag([1., 3.]), L_cells = 9)
        domain = Domain.box((-4, -4), (9, 9))
        u = solve_dirichlet(field, domain, affine)
        expected = DiscreteFunction.interpolate(affine, domain)
        self.assertClose(u.values, expected.values, atol = 1e-9)
        self.assertEqual(u.boundary, 'dirichlet')

    def test_antisymmetric_constant_field(self):
        k = 0.75 * fieldgen.ROTATION
        field = fieldgen.constant_field(2, numpy.eye(2), k, L_cells = 9)
        domain = Domain.box((0, 0), (6, 6))
        for kind in ('direct', 'cg'):
            u = solve_dirichlet(field, domain, affine,
                SolveConfig(solver_kind = kind))
            expected = DiscreteFunction.interpolate(affine, domain)
            self.assertClose(u.values, expected.values, atol = 1e-8)

    def test_one_dimensional_harmonic_mean(self):
        # -(a u')' = 0 on the cells -1, 0, 1 with u = 0 and 3 at the ends
        # makes the flux 3 / sum(1 / a).
        field = fieldgen.laminate(1, 0, 1., 4., L_cells = 3)
        u = solve_dirichlet(field, Domain.box((-1,), (3,)),
            lambda x: x[:, 0] + 1.5)
        gradients = u.cell_gradients()[:, 0]
        a = field.s[[2, 0, 1], 0, 0]
        flux = a * gradients
        self.assertClose(flux, numpy.full(3, 3 / numpy.sum(1 / a)))

    def test_refinement_keeps_affine(self):
        field = fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed = 2)
        domain = Domain.box((0, 0), (3, 3))
        u = solve_dirichlet(field, domain, lambda x: 0 * x[:, 0] + 1.,
            SolveConfig(refine = 3))
        self.assertClose(u.values, numpy.ones(u.values.shape), atol = 1e-10)


class PeriodicTest(numtest.TestCase):
    def test_constant_field(self):
        a = numpy.array([[2., 0.5], [0.5, 1.]])
        field = fieldgen.constant_field(2, a, L_cells = 3)
        self.assertClose(homogenized_periodic(field), a, atol = 1e-10)
        phi = solve_periodic_corrector(field, [1., 0.])
        self.assertClose(phi.values, numpy.zeros(phi.values.shape),
            atol = 1e-10)

    def test_laminate(self):
        # Harmonic mean 8 / 5 across the layers, arithmetic mean 5 / 2 along
        # them.
        field = fieldgen.laminate(2, 0, 1., 4., L_cells = 9)
        for refine in (1, 2):
            a_bar = homogenized_periodic(field, SolveConfig(refine = refine))
            self.assertClose(a_bar, numpy.diag([1.6, 2.5]), atol = 1e-8)

    def test_one_dimensional_laminate(self):
        field = fieldgen.laminate(1, 0, 1., 100., L_cells = 81)
        a_bar = homogenized_periodic(field)
        self.assertClose(a_bar, [[200 / 101.]], rtol = 1e-8)
        self.assertClose(a_bar[0, 0], 1.9802, rtol = 1e-4)

    def test_corrector_is_periodic_with_zero_mean(self):
        field = fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed = 4)
        phi = solve_periodic_corrector(field, [0., 1.])
        self.assertEqual(phi.boundary, 'periodic')
        self.assertClose(phi.values[0], phi.values[-1])
        self.assertClose(phi.values[:, 0], phi.values[:, -1])
        self.assertLess(abs(phi.values[:-1, :-1].mean()), 1e-12)

    def test_symmetric_checkerboard_bounds(self):
        field = fieldgen.checkerboard(2, 27, 1., 9., 0.5, seed = 0)
        a_bar = homogenized_periodic(field)
        self.assertClose(a_bar, a_bar.T, atol = 1e-8)
        eigenvalues = numpy.linalg.eigvalsh(0.5 * (a_bar + a_bar.T))
        fraction = float(numpy.mean(field.s[..., 0, 0] == 1.))
        harmonic = 1 / (fraction + (1 - fraction) / 9.)
        arithmetic = fraction + 9 * (1 - fraction)
        self.assertGreaterEqual(eigenvalues[0], harmonic - 1e-8)
        self.assertLessEqual(eigenvalues[1], arithmetic + 1e-8)


class EnergyTest(numtest.TestCase):
    def test_constant_field_value(self):
        k = 0.5 * fieldgen.ROTATION
        field = fieldgen.constant_field(2, numpy.diag([2., 1.]), k, L_cells = 9)
        A = fieldgen.pointwise_A(numpy.diag([2., 1.]), k)
        region = Domain.box((-4, -4), (9, 9))
        P = numpy.array([1., -2., 0.5, 3.])
        value, X = minimize_A_energy(field, region, P)
        self.assertClose(value, 0.5 * P @ A @ P, rtol = 1e-9)
        self.assertLess(numpy.abs(X).max(), 1e-8)

    def test_optimality(self):
        field = fieldgen.checkerboard(2, 9, 1., 9., 0.5, seed = 5)
        problem = EnergyProblem(field, Domain.box((0, 0), (9, 9)))
        for P in numpy.eye(4):
            self.assertLess(problem.optimality_residual(P), 1e-9)
            # The minimum lies below the value at X = 0.
            self.assertLessEqual(problem.value(P),
                0.5 * P @ problem.A_mean @ P + 1e-12)
        phi, psi = problem.potentials(numpy.eye(4)[0])
        self.assertEqual(phi.boundary, 'zero-trace')
        self.assertIsNotNone(psi)

    def test_one_dimensional(self):
        field = fieldgen.laminate(1, 0, 1., 4., L_cells = 9)
        problem = EnergyProblem(field, Domain.box((-4,), (9,)))
        phi, psi = problem.potentials([1., 0.])
        self.assertIsNone(psi)
        self.assertEqual(problem.loads.shape[1], 2)

    def test_small_region(self):
        field = fieldgen.constant_field(2, numpy.eye(2), L_cells = 3)
        self.assertRaises(GeometryError,
            EnergyProblem, field, Domain.box((0, 0), (1, 3)))


if __name__ == '__main__':
    unittest.main()
