# This file is part of the hicontrast library.
#
# The hicontrast library is free software; you can redistribute it and/or
# modify it under the terms of the GNU General Public License as published by
# the Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.
#
# The hicontrast library is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU General
# Public License for more details.

'''Multilinear finite elements on unit cells.

Supports the following operations:

    solve_dirichlet(field, region, boundary_data, config)
        Discrete a-harmonic extension of boundary data into region.

    solve_periodic_corrector(field, e, config)
        Periodic mean zero phi_e with -div a (e + grad phi_e) = 0.

    homogenized_periodic(field, config)
        Effective matrix of the periodic cell problem.

    minimize_A_energy(field, region, P, config)
        Returns (value, X): the minimum over zero trace potentials of the
        volume average of 1/2 (X + P).A(x)(X + P), where X stacks the gradient
        of one potential and, for d = 2, the perpendicular gradient of a
        stream potential.

Every cell may be subdivided into refine^d elements (SolveConfig.refine).
Element integrals use the tensor 2 point Gauss rule, which is exact for the
bilinear forms of cellwise constant coefficients.'''

import itertools
import logging
import os

import numpy
import scipy.sparse
import scipy.sparse.linalg

from .fieldgen import pointwise_A
from .geometry import Domain, GeometryError

__all__ = [
    'SolveConfig',          # Tolerances and solver selection
    'SolverFailure',        # Raised on non-convergence
    'DiscreteFunction',     # Nodal values on a rasterized region
    'Mesh',                 # Element and node numbering of a region
    'EnergyProblem',        # Factorized minimization defining A(U)
    'solve_dirichlet',
    'solve_periodic_corrector',
    'homogenized_periodic',
    'periodic_correctors',
    'minimize_A_energy',
    'linear_solve',
]

logger = logging.getLogger(__name__)


def _check_env(name, default):
    return int(os.environ.get(name, default))

# Largest system solved by sparse LU when solver_kind is 'auto'.
DIRECT_LIMIT = _check_env('HICONTRAST_DIRECT_LIMIT', 400000)

SOLVER_KINDS = ('auto', 'direct', 'cg', 'krylov')

# Perpendicular gradient: grad_perp psi = PERP @ grad psi.
PERP = numpy.array([[0., -1.], [1., 0.]])


class SolverFailure(Exception):
    '''A linear solve did not reach its tolerance.'''

    def __init__(self, kind, size, iterations, residuals, tol_rel):
        Exception.__init__(self, kind, size, iterations)
        self.kind = kind
        self.size = size
        self.iterations = iterations
        self.residuals = list(residuals)
        self.tol_rel = tol_rel

    def __str__(self):
        last = self.residuals[-1] if self.residuals else float('nan')
        return '%s solve of size %d failed after %d iterations: ' \
            'relative residual %.3e > %.1e' % (
                self.kind, self.size, self.iterations, last, self.tol_rel)


class SolveConfig(object):
    __slots__ = [
        'tol_rel',          # Relative residual tolerance
        'max_iter',         # Iteration cap, None for 50 * grid side
        'solver_kind',      # auto | direct | cg | krylov
        'preconditioner',   # Only 'diagonal'
        'refine',           # Elements per cell side
    ]

    def __init__(self, tol_rel = 1e-10, max_iter = None, solver_kind = 'auto',
            preconditioner = 'diagonal', refine = 1):
        if not 0 < tol_rel < 1:
            raise ValueError('tol_rel must lie in (0, 1)')
        if max_iter is not None and max_iter < 1:
            raise ValueError('max_iter must be at least 1')
        if solver_kind not in SOLVER_KINDS:
            raise ValueError('Unknown solver kind %r' % solver_kind)
        if preconditioner != 'diagonal':
            raise ValueError('Unknown preconditioner %r' % preconditioner)
        if int(refine) < 1:
            raise ValueError('refine must be at least 1')
        self.tol_rel = float(tol_rel)
        self.max_iter = max_iter
        self.solver_kind = solver_kind
        self.preconditioner = preconditioner
        self.refine = int(refine)

    def __repr__(self):
        return 'SolveConfig(%s)' % ', '.join(
            '%s=%r' % (name, getattr(self, name)) for name in self.__slots__)

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in self.__slots__)

    def iteration_cap(self, side):
        if self.max_iter is None:
            return 50 * int(side)
        return int(self.max_iter)


class SolveInfo(object):
    __slots__ = ['kind', 'size', 'iterations', 'residuals', 'energies']

    def __init__(self, kind, size, iterations, residuals, energies):
        self.kind = kind
        self.size = size
        self.iterations = iterations
        self.residuals = residuals
        self.energies = energies

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else 0.


# ----------------------------------------------------------------------------
#   Reference element

class _ReferenceElement(object):
    '''Multilinear element on [0, 1]^d with the tensor 2 point Gauss rule.'''

    def __init__(self, d):
        self.d = d
        self.offsets = numpy.array(
            list(itertools.product((0, 1), repeat = d)), dtype = int)
        g = 0.5 / numpy.sqrt(3.)
        self.points = numpy.array(
            list(itertools.product((0.5 - g, 0.5 + g), repeat = d)))
        self.weights = numpy.full(len(self.points), 0.5 ** d)
        self.values = self.shape_values(self.points)
        self.gradients = self.shape_gradients(self.points)
        self.centre_gradients = self.shape_gradients(
            numpy.full((1, d), 0.5))[0]

    def _factors(self, points):
        points = numpy.asarray(points, dtype = numpy.float64)
        # factors[q, i, a] = xi_a if offset_ia else 1 - xi_a
        return numpy.where(self.offsets[None, :, :] == 1,
            points[:, None, :], 1 - points[:, None, :])

    def shape_values(self, points):
        return numpy.prod(self._factors(points), axis = 2)

    def shape_gradients(self, points):
        factors = self._factors(points)
        signs = numpy.where(self.offsets == 1, 1., -1.)
        result = numpy.empty(factors.shape)
        for a in range(self.d):
            others = numpy.delete(factors, a, axis = 2)
            result[:, :, a] = signs[None, :, a] * numpy.prod(others, axis = 2)
        return result

_elements = {}

def reference_element(d):
    if d not in _elements:
        _elements[d] = _ReferenceElement(d)
    return _elements[d]


# ----------------------------------------------------------------------------
#   Mesh

class Mesh(object):
    '''Element and node numbering for a Domain subdivided refine times per
    cell side, or for the periodic torus when periodic is set.'''

    def __init__(self, domain, refine = 1, periodic = False):
        self.domain = domain
        self.d = d = domain.d
        self.refine = r = int(refine)
        self.periodic = periodic
        self.h = 1. / r
        self.element = reference_element(d)

        element_mask = domain.mask
        for axis in range(d):
            element_mask = numpy.repeat(element_mask, r, axis = axis)
        self.element_shape = element_mask.shape
        if periodic:
            self.node_shape = self.element_shape
        else:
            self.node_shape = tuple(n + 1 for n in self.element_shape)
        self.node_count = int(numpy.prod(self.node_shape))

        self.elements = numpy.argwhere(element_mask)
        self.cells = self.elements // r
        node_index = self.elements[:, None, :] + self.element.offsets[None]
        if periodic:
            node_index = node_index % numpy.array(self.node_shape)
        self.node_of = numpy.ravel_multi_index(
            tuple(node_index[..., a] for a in range(d)), self.node_shape)

        active = numpy.zeros(self.node_count, dtype = bool)
        active[self.node_of.ravel()] = True
        self.active_nodes = active
        if periodic:
            self.interior_nodes = active.copy()
        else:
            padded = numpy.pad(element_mask, 1, constant_values = False)
            interior = numpy.ones(self.node_shape, dtype = bool)
            for offset in self.element.offsets:
                index = tuple(
                    slice(1 - o, 1 - o + n)
                    for o, n in zip(offset, self.node_shape))
                interior &= padded[index]
            self.interior_nodes = interior.ravel()
        self.boundary_nodes = active & ~self.interior_nodes

        self.weights = self.element.weights * self.h ** d
        self.gradients = self.element.gradients / self.h
        self.volume = float(domain.volume)

    @property
    def element_count(self):
        return len(self.elements)

    def node_coordinates(self):
        grids = numpy.meshgrid(*[
            o - 0.5 + self.h * numpy.arange(n)
            for o, n in zip(self.domain.origin, self.node_shape)],
            indexing = 'ij')
        return numpy.stack(grids, axis = -1).reshape(-1, self.d)

    def element_centres(self):
        return self.domain.origin - 0.5 + self.h * (self.elements + 0.5)

    def gauss_points(self):
        '''Physical coordinates of the Gauss points, (ne, nq, d).'''
        corner = self.domain.origin - 0.5 + self.h * self.elements
        return corner[:, None, :] + self.h * self.element.points[None]

    def element_coefficients(self, field):
        '''(s, k) of the parent cell of every element.'''
        s, k = field.window(self.domain.origin, self.domain.shape)
        index = tuple(self.cells.T)
        return s[index], k[index]

    def side(self):
        return max(self.node_shape)

    def select(self, region):
        '''Boolean mask over elements lying in the cells of region.'''
        mask = self.domain.submask(region)
        return mask[tuple(self.cells.T)]

    def assemble(self, coef):
        '''Matrix of the bilinear form sum over components x, y of the
        integral of grad w_x . coef_xy grad u_y, for per element coef of
        shape (ne, ncomp, d, ncomp, d).  Degrees of freedom are numbered
        component major.'''
        ne, ncomp = coef.shape[0], coef.shape[1]
        G = self.gradients
        local = numpy.einsum(
            'q,qia,cxayb,qjb->cxiyj', self.weights, G, coef, G)
        dof = self.dofs(ncomp)
        shape = local.shape
        rows = numpy.broadcast_to(dof[:, :, :, None, None], shape)
        cols = numpy.broadcast_to(dof[:, None, None, :, :], shape)
        size = ncomp * self.node_count
        return scipy.sparse.coo_matrix(
            (local.ravel(), (rows.ravel(), cols.ravel())),
            shape = (size, size)).tocsr()

    def load(self, flux):
        '''Vector of integrals of grad w_x . flux_x for per element constant
        flux of shape (ne, ncomp, d).'''
        ncomp = flux.shape[1]
        local = numpy.einsum(
            'q,qia,cxa->cxi', self.weights, self.gradients, flux)
        return numpy.bincount(self.dofs(ncomp).ravel(), weights = local.ravel(),
            minlength = ncomp * self.node_count)

    def dofs(self, ncomp):
        return (numpy.arange(ncomp)[None, :, None] * self.node_count +
            self.node_of[:, None, :])

    def gauss_gradients(self, values):
        '''Gradients at Gauss points, (ne, nq, d), of nodal values.'''
        local = values.reshape(-1)[self.node_of]
        return numpy.einsum('qia,ci->cqa', self.gradients, local)

    def gauss_values(self, values):
        local = values.reshape(-1)[self.node_of]
        return numpy.einsum('qi,ci->cq', self.element.values, local)

    def centre_gradients(self, values):
        local = values.reshape(-1)[self.node_of]
        return numpy.einsum(
            'ia,ci->ca', self.element.centre_gradients / self.h, local)

    def values_at(self, values, reference_points):
        '''Values at the given points of the reference element of every
        element, (ne, npoints).'''
        local = values.reshape(-1)[self.node_of]
        shape = self.element.shape_values(reference_points)
        return numpy.einsum('pi,ci->cp', shape, local)


# ----------------------------------------------------------------------------
#   Linear solves

def _relative_residual(K, x, b, b_norm):
    return float(numpy.linalg.norm(b - K @ x) / b_norm)


def _iterative(K, b, config, symmetric, side):
    diagonal = K.diagonal()
    preconditioner = scipy.sparse.diags(1. / diagonal)
    b_norm = numpy.linalg.norm(b)
    residuals = []
    energies = []

    def callback(xk):
        Kx = K @ xk
        residuals.append(float(numpy.linalg.norm(b - Kx) / b_norm))
        if symmetric:
            energies.append(float(0.5 * xk @ Kx - b @ xk))

    kind = 'cg' if symmetric else 'krylov'
    method = scipy.sparse.linalg.cg if symmetric else \
        scipy.sparse.linalg.bicgstab
    max_iter = config.iteration_cap(side)
    x, status = method(K, b, rtol = config.tol_rel, atol = 0.,
        maxiter = max_iter, M = preconditioner, callback = callback)
    final = _relative_residual(K, x, b, b_norm)
    if status != 0 or final > 10 * config.tol_rel:
        raise SolverFailure(kind, K.shape[0], len(residuals),
            residuals + [final], config.tol_rel)
    return x, SolveInfo(kind, K.shape[0], len(residuals), residuals, energies)


def linear_solve(K, b, config, symmetric = True, side = 1):
    '''Solves K x = b for one right hand side or for the columns of a 2D
    array b.  Returns (x, [SolveInfo per column]).'''
    b = numpy.asarray(b, dtype = numpy.float64)
    columns = b.reshape(b.shape[0], -1)
    kind = config.solver_kind
    if kind == 'auto':
        if K.shape[0] <= DIRECT_LIMIT:
            kind = 'direct'
        else:
            kind = 'cg' if symmetric else 'krylov'
    elif kind == 'cg' and not symmetric:
        kind = 'krylov'

    x = numpy.zeros(columns.shape)
    infos = []
    lu = None
    for i in range(columns.shape[1]):
        rhs = columns[:, i]
        if not numpy.any(rhs):
            infos.append(SolveInfo(kind, K.shape[0], 0, [0.], []))
            continue
        if kind == 'direct':
            if lu is None:
                lu = _Factorized(K, config)
            x[:, i], info = lu.solve(rhs)
        else:
            x[:, i], info = _iterative(K, rhs, config, kind == 'cg', side)
        logger.debug('%s solve: size %d, %d iterations, residual %.2e',
            info.kind, info.size, info.iterations, info.residual)
        infos.append(info)
    return x.reshape(b.shape), infos


class _Factorized(object):
    def __init__(self, K, config):
        self.K = K
        self.config = config
        self.lu = scipy.sparse.linalg.splu(K.tocsc())

    def solve(self, b):
        K, config = self.K, self.config
        x = self.lu.solve(b)
        b_norm = numpy.linalg.norm(b)
        residuals = [_relative_residual(K, x, b, b_norm)]
        # Iterative refinement against the same factorization.
        for _ in range(3):
            if residuals[-1] <= config.tol_rel:
                break
            x = x + self.lu.solve(b - K @ x)
            residuals.append(_relative_residual(K, x, b, b_norm))
        if residuals[-1] > config.tol_rel:
            raise SolverFailure('direct', K.shape[0], len(residuals) - 1,
                residuals, config.tol_rel)
        return x, SolveInfo(
            'direct', K.shape[0], len(residuals) - 1, residuals, [])


# ----------------------------------------------------------------------------
#   Discrete functions

class DiscreteFunction(object):
    '''Nodal values of a multilinear function on the elements of a domain.
    Nodes outside the closure of the active cells carry zero.'''

    __slots__ = [
        'values',           # Array of shape refine * domain.shape + 1
        'domain',
        'refine',
        'boundary',         # 'free', 'zero-trace', 'dirichlet', 'periodic'
        'info',             # List of SolveInfo, empty if not solved
        '__mesh',
    ]

    def __init__(self, values, domain, refine = 1, boundary = 'free',
            info = None):
        self.domain = domain
        self.refine = int(refine)
        shape = tuple(self.refine * n + 1 for n in domain.shape)
        self.values = numpy.asarray(values, dtype = numpy.float64).reshape(shape)
        self.boundary = boundary
        self.info = info or []
        self.__mesh = None

    def __repr__(self):
        return 'DiscreteFunction(%r, refine=%d, %s)' % (
            self.domain, self.refine, self.boundary)

    @classmethod
    def interpolate(cls, function, domain, refine = 1):
        '''Nodal interpolant of function(points) -> values.'''
        mesh = Mesh(domain, refine)
        values = numpy.where(mesh.active_nodes,
            function(mesh.node_coordinates()), 0.)
        result = cls(values, domain, refine)
        result.__mesh = mesh
        return result

    @property
    def mesh(self):
        if self.__mesh is None:
            self.__mesh = Mesh(self.domain, self.refine)
        return self.__mesh

    def _combine(self, other, values):
        if self.domain is not other.domain and not (
                numpy.array_equal(self.domain.origin, other.domain.origin) and
                numpy.array_equal(self.domain.mask, other.domain.mask)) or \
                self.refine != other.refine:
            raise ValueError('Functions live on different meshes')
        result = DiscreteFunction(values, self.domain, self.refine)
        result.__mesh = self.__mesh
        return result

    def __add__(self, other):
        return self._combine(other, self.values + other.values)

    def __sub__(self, other):
        return self._combine(other, self.values - other.values)

    def scaled(self, alpha):
        result = DiscreteFunction(alpha * self.values, self.domain, self.refine)
        result.__mesh = self.__mesh
        return result

    def centre_gradients(self):
        '''Gradient at every element centre, (ne, d); equal to the element
        average of the gradient.'''
        return self.mesh.centre_gradients(self.values)

    def gauss_gradients(self):
        return self.mesh.gauss_gradients(self.values)

    def gauss_values(self):
        return self.mesh.gauss_values(self.values)

    def cell_average(self, element_values):
        '''Averages per element quantities (ne, ...) over the elements of
        every cell; returns an array over the domain box, zero outside.'''
        element_values = numpy.asarray(element_values)
        mesh = self.mesh
        result = numpy.zeros(self.domain.shape + element_values.shape[1:])
        numpy.add.at(result, tuple(mesh.cells.T), element_values)
        return result / mesh.refine ** mesh.d

    def cell_gradients(self):
        '''Cell averages of the gradient over the domain box, shape + (d,).'''
        return self.cell_average(self.centre_gradients())

    def cell_values(self):
        '''Cell averages of the function over the domain box.'''
        mesh = self.mesh
        element_means = numpy.mean(self.values.reshape(-1)[mesh.node_of], axis = 1)
        return self.cell_average(element_means)


# ----------------------------------------------------------------------------
#   Solvers

def _as_domain(region):
    if isinstance(region, Domain):
        return region
    return region.domain()


def _boundary_values(boundary_data, mesh):
    if isinstance(boundary_data, DiscreteFunction):
        return boundary_data.values.reshape(-1)
    elif callable(boundary_data):
        return numpy.asarray(
            boundary_data(mesh.node_coordinates()), dtype = numpy.float64)
    else:
        return numpy.asarray(boundary_data, dtype = numpy.float64).reshape(-1)


def solve_dirichlet(field, region, boundary_data, config = None):
    '''Discrete a-harmonic function in region taking boundary_data, a callable
    on node coordinates or an array of nodal values, on the boundary.'''
    config = config or SolveConfig()
    domain = _as_domain(region)
    mesh = Mesh(domain, config.refine)
    s, k = mesh.element_coefficients(field)
    coef = (s + k)[:, None, :, None, :]
    K = mesh.assemble(coef)

    values = numpy.zeros(mesh.node_count)
    g = _boundary_values(boundary_data, mesh)
    fixed = mesh.boundary_nodes
    free = mesh.interior_nodes
    values[fixed] = g[fixed]
    info = []
    if free.any():
        K_free = K[free]
        rhs = -(K_free[:, fixed] @ values[fixed])
        values[free], info = linear_solve(K_free[:, free], rhs, config,
            symmetric = not numpy.any(k), side = mesh.side())
    return DiscreteFunction(values, domain, config.refine, 'dirichlet', info)


def _periodic_system(field, config):
    L = field.L_cells
    domain = Domain.box(numpy.zeros(field.d, dtype = int), (L,) * field.d)
    mesh = Mesh(domain, config.refine, periodic = True)
    s, k = mesh.element_coefficients(field)
    a = s + k
    return domain, mesh, a, mesh.assemble(a[:, None, :, None, :]), \
        not numpy.any(k)


def periodic_correctors(field, directions, config):
    '''Solves the periodic cell problems for the rows of directions, with the
    first node pinned and the mean then removed.'''
    domain, mesh, a, K, symmetric = _periodic_system(field, config)
    directions = numpy.atleast_2d(numpy.asarray(directions, dtype = float))
    flux = numpy.einsum('cab,nb->nca', a, directions)
    rhs = numpy.stack([-mesh.load(f[:, None, :]) for f in flux], axis = 1)
    K_pinned = K[1:][:, 1:]
    solution, info = linear_solve(K_pinned, rhs[1:], config,
        symmetric = symmetric, side = mesh.side())
    solution = numpy.concatenate(
        [numpy.zeros((1, solution.shape[1])), solution], axis = 0)
    # Every node of the uniform torus carries the same weight.
    solution -= solution.mean(axis = 0)

    result = []
    for i in range(len(directions)):
        torus = solution[:, i].reshape(mesh.node_shape)
        values = numpy.pad(torus, [(0, 1)] * field.d, mode = 'wrap')
        result.append(DiscreteFunction(values, domain, config.refine,
            'periodic', [info[i]]))
    return result, mesh, a


def solve_periodic_corrector(field, e, config = None):
    config = config or SolveConfig()
    return periodic_correctors(field, [e], config)[0][0]


def homogenized_periodic(field, config = None):
    '''Returns the d x d matrix a_bar with a_bar e_j the average of
    a (e_j + grad phi_j).'''
    config = config or SolveConfig()
    d = field.d
    correctors, mesh, a = periodic_correctors(field, numpy.eye(d), config)
    volume = mesh.volume
    a_bar = numpy.empty((d, d))
    for j, phi in enumerate(correctors):
        # Periodic values reuse the box numbering of the open mesh.
        gradients = phi.gauss_gradients() + numpy.eye(d)[j]
        flux = numpy.einsum('cab,cqb->cqa', a, gradients)
        a_bar[:, j] = numpy.einsum('q,cqa->a', mesh.weights, flux) / volume
    return a_bar


class EnergyProblem(object):
    '''The convex minimization defining A(U) on a region, factorized once so
    that the minimizer for any P is a linear combination of the minimizers
    for the 2d standard basis vectors.'''

    def __init__(self, field, region, config = None):
        self.config = config = config or SolveConfig()
        self.domain = domain = _as_domain(region)
        self.d = d = domain.d
        if domain.min_side() < 2:
            raise GeometryError(
                'Region needs at least 2 cells per side', domain.shape)
        self.mesh = mesh = Mesh(domain, config.refine)
        s, k = mesh.element_coefficients(field)
        A = pointwise_A(s, k)
        self.A = A
        self.ncomp = ncomp = 2 if d == 2 else 1

        if d == 2:
            T = numpy.zeros((4, 4))
            T[:2, :2] = numpy.eye(2)
            T[2:, 2:] = PERP
        else:
            T = numpy.array([[1.], [0.]])
        self.T = T
        B = numpy.einsum('ia,cij,jb->cab', T, A, T)
        K = mesh.assemble(B.reshape(-1, ncomp, d, ncomp, d))

        self.free = numpy.tile(mesh.interior_nodes, ncomp)
        self.K = K[self.free][:, self.free]
        # Loads for each basis vector of R^2d, (ndof_free, 2d).
        loads = []
        for i in range(2 * d):
            flux = numpy.einsum('ia,ci->ca', T, A[:, :, i])
            loads.append(mesh.load(flux.reshape(-1, ncomp, d))[self.free])
        self.loads = numpy.stack(loads, axis = 1)
        self.solutions, self.info = linear_solve(self.K, -self.loads, config,
            symmetric = True, side = mesh.side())
        # Volume weighted average of A over the region.
        self.A_mean = numpy.einsum('c,cij->ij',
            numpy.full(mesh.element_count, mesh.h ** d), A) / mesh.volume

    def minimizer(self, P):
        return self.solutions @ numpy.asarray(P, dtype = numpy.float64)

    def value(self, P):
        P = numpy.asarray(P, dtype = numpy.float64)
        u = self.minimizer(P)
        b = self.loads @ P
        return float(0.5 * P @ self.A_mean @ P + 0.5 * u @ b / self.mesh.volume)

    def optimality_residual(self, P):
        P = numpy.asarray(P, dtype = numpy.float64)
        b = self.loads @ P
        b_norm = numpy.linalg.norm(b)
        if b_norm == 0:
            return 0.
        return float(numpy.linalg.norm(self.K @ self.minimizer(P) + b) / b_norm)

    def potentials(self, P):
        '''Zero trace potentials (phi, psi) of the minimizer; psi is None in
        d = 1.'''
        values = numpy.zeros(self.ncomp * self.mesh.node_count)
        values[self.free] = self.minimizer(P)
        values = values.reshape(self.ncomp, -1)
        functions = [
            DiscreteFunction(v, self.domain, self.config.refine, 'zero-trace')
            for v in values]
        return functions[0], functions[1] if self.ncomp == 2 else None

    def X(self, P):
        '''The minimizing field X at element centres, (ne, 2d).'''
        phi, psi = self.potentials(P)
        gradients = [phi.centre_gradients()]
        if psi is not None:
            gradients.append(psi.centre_gradients())
        stacked = numpy.concatenate(gradients, axis = 1)
        return stacked @ self.T.T


def minimize_A_energy(field, region, P, config = None):
    problem = EnergyProblem(field, region, config)
    return problem.value(P), problem.X(P)
