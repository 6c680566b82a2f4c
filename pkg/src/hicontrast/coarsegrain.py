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

'''Coarse grained matrices and multiscale error quantities.

Supports the following operations:

    coarse_matrix(field, cube, config)
        The 2d x 2d matrix A(U), by polarization of the minimal energies.

    extract_blocks(M)
        Recovers (s, s_star, k) from the block form

            [ s + k^t s_star^-1 k    -k^t s_star^-1 ]
            [ -s_star^-1 k            s_star^-1     ]

    eval_J(blocks, p, q), eval_Jstar(blocks, p, q)
        1/2 p.s p + 1/2 (q + k p).s_star^-1 (q + k p) - p.q, and the same
        with k replaced by -k.

    J_direct(field, region, p, q, config)
        The same quantity as a supremum over discrete a-harmonic functions.

    estimate_homogenized(ensemble, m, samples, config)
        Sample mean of A(cube_m) over independent realizations.

    build_ladder(field, m, config, geometry)
        A(z + cube_n) for every subcube of cube_m down to level 1, the cubes
        being adapted to geometry when one is given.

    adapted_to(A_bar, k0)
        The adapted geometry of the s block of A_bar.

    homogenization_error_Es(field, m, s_exponent, A_bar)
    coarse_defect(field, m, gamma, A_bar)
    error_upper_bound(defects, m, s_exponent)
    subadditivity_check(field, parent, child_level)
    scale_report(field, m, A_bar, s_exponent, gamma, config, pool, k0)

The error, defect and report entry points work on the cubes adapted to the
s block of A_bar.

Every entry point accepting throw may be called with throw=False, in which
case expected failures are returned as a Failure value instead of raised.'''

import csv
import json
import logging
import math
import os

import numpy
import scipy.linalg
import scipy.sparse.linalg

from .fem import EnergyProblem, Mesh, SolveConfig, SolverFailure, \
    homogenized_periodic
from .fieldgen import pointwise_A
from .geometry import DEFAULT_K0, Domain, GeometryError, \
    make_adapted_geometry
from .workers import using_pool

__all__ = [
    'CoarseMatrix',         # A(U) with provenance
    'CoarseBlocks',         # (s, s_star, k) of A(U)
    'HomogenizedEstimate',  # Ensemble estimate of A_bar
    'Ladder',               # Subcube matrices on every level
    'ScaleReport',          # Serializable multiscale summary
    'Failure',              # Returned in place of an exception
    'DegenerateMatrix',
    'BudgetExceeded',
    'maybe_throw',
    'coarse_matrix',
    'extract_blocks',
    'blocks_matrix',
    'eval_J',
    'eval_Jstar',
    'J_direct',
    'estimate_homogenized',
    'build_ladder',
    'adapted_to',
    'homogenization_error_Es',
    'coarse_defect',
    'error_upper_bound',
    'subadditivity_check',
    'scale_report',
]

logger = logging.getLogger(__name__)


def _check_env(name, default):
    return int(os.environ.get(name, default))

# Largest number of subcube solves a single request may schedule.
MAX_SUBCUBES = _check_env('HICONTRAST_MAX_SUBCUBES', 10000)

ASYMMETRY_WARNING = 1e-6
LOG_FLOAT_MAX = math.log(numpy.finfo(numpy.float64).max)


class DegenerateMatrix(ValueError):
    def __init__(self, what, eigenvalue):
        ValueError.__init__(self, what, eigenvalue)
        self.what = what
        self.eigenvalue = eigenvalue

    def __str__(self):
        return '%s is degenerate (smallest eigenvalue %.3e)' % (
            self.what, self.eigenvalue)


class BudgetExceeded(ValueError):
    def __init__(self, requested, limit, what):
        ValueError.__init__(self, requested, limit, what)
        self.requested = requested
        self.limit = limit
        self.what = what

    def __str__(self):
        return '%s needs %d cube solves, more than the limit of %d ' \
            '(HICONTRAST_MAX_SUBCUBES)' % (self.what, self.requested, self.limit)


class Failure(Exception):
    '''Returned by entry points called with throw=False when an expected
    failure occurs.  Tests false.'''

    def __init__(self, operation, error):
        Exception.__init__(self, operation, error)
        self.ok = False
        self.operation = operation
        self.error = error

    def __repr__(self):
        return 'Failure(%r, %r)' % (self.operation, self.error)

    def __str__(self):
        return '%s: %s' % (self.operation, self.error)

    def __bool__(self):
        return self.ok


EXPECTED_FAILURES = (
    SolverFailure, DegenerateMatrix, BudgetExceeded, GeometryError)

def maybe_throw(function):
    '''Function decorator for optionally catching exceptions.  Expected
    failures raised by the wrapped function are normally propagated
    unchanged, but if throw=False is given as a keyword argument they are
    returned as a Failure instead.'''

    def throw_wrapper(*args, **kargs):
        if kargs.pop('throw', True):
            return function(*args, **kargs)
        else:
            try:
                return function(*args, **kargs)
            except EXPECTED_FAILURES as error:
                return Failure(function.__name__, error)

    throw_wrapper.__name__ = function.__name__
    throw_wrapper.__doc__ = function.__doc__
    return throw_wrapper


# ----------------------------------------------------------------------------
#   Coarse matrices and blocks

def _sym(M):
    return 0.5 * (M + numpy.swapaxes(M, -1, -2))


class CoarseMatrix(object):
    __slots__ = [
        'M',                # Symmetrized 2d x 2d matrix
        'region',           # Cube, ball or Domain it was computed on
        'refine',           # Elements per cell side
        'asymmetry',        # Relative asymmetry of the bilinear form
        'residual',         # Largest first order optimality residual
    ]

    def __init__(self, M, region, refine = 1, asymmetry = 0., residual = 0.):
        self.M = M
        self.region = region
        self.refine = refine
        self.asymmetry = asymmetry
        self.residual = residual

    def __repr__(self):
        return 'CoarseMatrix(%r, %s)' % (self.region, self.M.tolist())

    @property
    def d(self):
        return self.M.shape[0] // 2

    def min_eigenvalue(self):
        return float(numpy.linalg.eigvalsh(self.M)[0])

    def blocks(self):
        return extract_blocks(self)


class CoarseBlocks(object):
    __slots__ = ['s', 's_star', 'k']

    def __init__(self, s, s_star, k):
        self.s = s
        self.s_star = s_star
        self.k = k

    def __repr__(self):
        return 'CoarseBlocks(s=%s, s_star=%s, k=%s)' % (
            self.s.tolist(), self.s_star.tolist(), self.k.tolist())

    def loewner_gap(self):
        '''Smallest eigenvalue of s - s_star.'''
        return float(numpy.linalg.eigvalsh(_sym(self.s - self.s_star))[..., 0])

    def matrix(self):
        return blocks_matrix(self.s, self.s_star, self.k)

    def as_dict(self):
        return {
            's': self.s.tolist(), 's_star': self.s_star.tolist(),
            'k': self.k.tolist()}


def blocks_matrix(s, s_star, k):
    '''Reassembles the coarse matrix from its blocks.'''
    s_star_inv = _sym(numpy.linalg.inv(s_star))
    k_t = numpy.swapaxes(k, -1, -2)
    bottom_left = -s_star_inv @ k
    top_left = _sym(s + k_t @ s_star_inv @ k)
    return numpy.concatenate([
        numpy.concatenate(
            [top_left, numpy.swapaxes(bottom_left, -1, -2)], axis = -1),
        numpy.concatenate([bottom_left, s_star_inv], axis = -1)], axis = -2)


def extract_blocks(M):
    '''Blocks of a coarse matrix, or of an array of them.'''
    if isinstance(M, CoarseMatrix):
        M = M.M
    M = numpy.asarray(M, dtype = numpy.float64)
    d = M.shape[-1] // 2
    top_left = M[..., :d, :d]
    bottom_left = M[..., d:, :d]
    bottom_right = _sym(M[..., d:, d:])
    smallest = numpy.min(numpy.linalg.eigvalsh(bottom_right))
    if smallest <= 1e-12:
        raise DegenerateMatrix('Bottom right block', float(smallest))
    s_star = _sym(numpy.linalg.inv(bottom_right))
    k = -s_star @ bottom_left
    k_t = numpy.swapaxes(k, -1, -2)
    s = _sym(top_left - k_t @ bottom_right @ k)
    return CoarseBlocks(s, s_star, k)


def _J(s, s_star, k, p, q):
    p = numpy.asarray(p, dtype = numpy.float64)
    q = numpy.asarray(q, dtype = numpy.float64)
    r = q + numpy.einsum('...ab,...b->...a', k, p)
    return 0.5 * numpy.einsum('...a,...ab,...b->...', p, s, p) + \
        0.5 * numpy.einsum('...a,...a->...', r, numpy.linalg.solve(
            s_star, r[..., None])[..., 0]) - \
        numpy.einsum('...a,...a->...', p, q)


def eval_J(blocks, p, q):
    return _J(blocks.s, blocks.s_star, blocks.k, p, q)


def eval_Jstar(blocks, p, q):
    return _J(blocks.s, blocks.s_star, -blocks.k, p, q)


@maybe_throw
def coarse_matrix(field, cube, config = None):
    '''A(U) on the cells of cube, recovered by polarization from the minimal
    energies at the standard basis vectors and their pairwise sums.'''
    problem = EnergyProblem(field, cube, config)
    n = 2 * problem.d
    E = numpy.eye(n)
    values = numpy.array([problem.value(E[i]) for i in range(n)])
    M = numpy.empty((n, n))
    for i in range(n):
        M[i, i] = 2 * values[i]
        for j in range(i + 1, n):
            M[i, j] = M[j, i] = \
                problem.value(E[i] + E[j]) - values[i] - values[j]

    # The bilinear form behind the energies is symmetric only up to the
    # accuracy of the solves.
    bilinear = problem.A_mean + \
        problem.solutions.T @ problem.loads / problem.mesh.volume
    scale = numpy.max(numpy.abs(bilinear))
    asymmetry = float(numpy.max(numpy.abs(bilinear - bilinear.T)) / scale)
    if asymmetry > ASYMMETRY_WARNING:
        logger.warning('Coarse matrix on %r has relative asymmetry %.2e',
            cube, asymmetry)
    residual = max(problem.optimality_residual(E[i]) for i in range(n))
    return CoarseMatrix(_sym(M), cube, problem.config.refine, asymmetry,
        residual)


# ----------------------------------------------------------------------------
#   Direct variational oracle for J

def _as_domain(region):
    if isinstance(region, Domain):
        return region
    return region.domain()


def J_direct(field, region, p, q, config = None):
    '''Supremum over discrete a-harmonic v of the volume average of
    -1/2 grad v.s grad v - p.a grad v + q.grad v, computed densely.  Only
    meant for small regions.'''
    config = config or SolveConfig()
    domain = _as_domain(region)
    mesh = Mesh(domain, config.refine)
    s, k = mesh.element_coefficients(field)
    a = s + k
    K = mesh.assemble(a[:, None, :, None, :])
    S = mesh.assemble(s[:, None, :, None, :])
    p = numpy.asarray(p, dtype = numpy.float64)
    q = numpy.asarray(q, dtype = numpy.float64)
    flux = -numpy.einsum('cba,b->ca', a, p) + q[None, :]
    load = mesh.load(flux[:, None, :]) / mesh.volume

    boundary = numpy.flatnonzero(mesh.boundary_nodes)
    interior = numpy.flatnonzero(mesh.interior_nodes)
    # Harmonic extension of boundary values c: v_I = -K_II^-1 K_IB c.
    E = numpy.zeros((mesh.node_count, len(boundary)))
    E[boundary, numpy.arange(len(boundary))] = 1
    if len(interior):
        K_II = K[interior][:, interior].tocsc()
        K_IB = K[interior][:, boundary].toarray()
        E[interior] = -scipy.sparse.linalg.splu(K_II).solve(K_IB)
    H = E.T @ (S @ E) / mesh.volume
    l = E.T @ load
    c = scipy.linalg.lstsq(_sym(H), l)[0]
    return float(0.5 * l @ c)


# ----------------------------------------------------------------------------
#   Ensemble estimate

class HomogenizedEstimate(object):
    __slots__ = [
        'A_bar',            # Sample mean of A(cube_m), or periodic estimate
        's_bar', 's_star_bar', 'k_bar',
        'lambda_bar',       # Smallest eigenvalue of s_bar
        'Lambda_bar',       # Spectral norm of s_bar
        'Pi_sbar',
        'samples',          # Number of successful samples
        'failed',           # Number of failed samples
        'm',                # Scale used
        'method',           # 'cube' or 'periodic'
        'matrices',         # Per sample matrices, (samples, 2d, 2d)
        'alternative',      # Mean of the per sample blocks
        'discrepancy',      # Relative gap between the two block estimates
    ]

    def __init__(self, **kargs):
        for name in self.__slots__:
            setattr(self, name, kargs.pop(name))
        assert not kargs, 'Unexpected fields %s' % sorted(kargs)

    def __repr__(self):
        return 'HomogenizedEstimate(s_bar=%s, samples=%d, m=%d, %s)' % (
            self.s_bar.tolist(), self.samples, self.m, self.method)

    @property
    def d(self):
        return self.s_bar.shape[0]

    @property
    def a_bar(self):
        return self.s_bar + self.k_bar

    @property
    def scalar_effective(self):
        '''Geometric mean of the determinants of s_bar and s_star_bar, as a
        scalar coefficient.'''
        return float((numpy.linalg.det(self.s_bar) *
            numpy.linalg.det(self.s_star_bar)) ** (0.5 / self.d))

    def as_dict(self):
        return {
            'A_bar': self.A_bar.tolist(),
            's_bar': self.s_bar.tolist(),
            's_star_bar': self.s_star_bar.tolist(),
            'k_bar': self.k_bar.tolist(),
            'lambda_bar': self.lambda_bar,
            'Lambda_bar': self.Lambda_bar,
            'Pi_sbar': self.Pi_sbar,
            'scalar_effective': self.scalar_effective,
            'samples': self.samples,
            'failed': self.failed,
            'm': self.m,
            'method': self.method,
            'alternative': self.alternative.as_dict(),
            'discrepancy': self.discrepancy,
        }


def _sample_matrix(ensemble, seed, m, config, method, geometry):
    field = ensemble(seed)
    if method == 'periodic':
        a_bar = homogenized_periodic(field, config)
        return pointwise_A(_sym(a_bar), 0.5 * (a_bar - a_bar.T))
    geometry = geometry or make_adapted_geometry(numpy.eye(field.d))
    return coarse_matrix(field, geometry.cube(m), config).M


@maybe_throw
def estimate_homogenized(ensemble, m, samples, config = None,
        method = 'cube', pool = None, geometry = None):
    '''ensemble(seed) returns a CoefficientField; samples is a count, using
    seeds 0 to samples - 1, or an explicit list of seeds.  The cube method
    averages over the cube of level m of geometry, by default the triadic
    one.'''
    if method not in ('cube', 'periodic'):
        raise ValueError('Unknown estimation method %r' % method)
    seeds = list(range(samples)) if isinstance(samples, int) else list(samples)
    if not seeds:
        raise ValueError('At least one sample is needed')
    config = config or SolveConfig()
    matrices = []
    first_failure = None
    with using_pool(pool) as pool:
        jobs = [
            pool.Spawn(_sample_matrix, ensemble, seed, m, config, method,
                geometry, raise_on_wait = True)
            for seed in seeds]
        for seed, job in zip(seeds, jobs):
            try:
                matrices.append(job.Wait())
            except (SolverFailure, DegenerateMatrix) as error:
                logger.warning('Sample %d failed: %s', seed, error)
                first_failure = first_failure or error
    if not matrices:
        raise first_failure
    matrices = numpy.array(matrices)

    A_bar = _sym(matrices.mean(axis = 0))
    blocks = extract_blocks(A_bar)
    per_sample = extract_blocks(matrices)
    alternative = CoarseBlocks(per_sample.s.mean(axis = 0),
        per_sample.s_star.mean(axis = 0), per_sample.k.mean(axis = 0))
    discrepancy = float(
        numpy.linalg.norm(alternative.s - blocks.s, 2) /
        numpy.linalg.norm(blocks.s, 2))
    eigenvalues = numpy.linalg.eigvalsh(blocks.s)
    return HomogenizedEstimate(
        A_bar = A_bar, s_bar = blocks.s, s_star_bar = blocks.s_star,
        k_bar = blocks.k,
        lambda_bar = float(eigenvalues[0]),
        Lambda_bar = float(eigenvalues[-1]),
        Pi_sbar = float(eigenvalues[-1] / eigenvalues[0]),
        samples = len(matrices), failed = len(seeds) - len(matrices),
        m = m, method = method, matrices = matrices,
        alternative = alternative, discrepancy = discrepancy)


# ----------------------------------------------------------------------------
#   Multiscale ladder

class Ladder(object):
    '''Coarse matrices of every level n subcube of cube_m, 1 <= n <= m, with
    the pointwise matrices of the cells as level 0.'''

    def __init__(self, field, geometry, m, levels, cells, asymmetry = 0.):
        self.asymmetry = asymmetry
        self.field = field
        self.geometry = geometry
        self.m = m
        self.d = field.d
        # levels[n] = (cubes, matrices (count, 2d, 2d)), lexicographic.
        self.levels = levels
        # Level 0: integer cells of cube_m and their pointwise matrices.
        self.cells = cells
        s, k = field.gather(cells)
        self.cell_matrices = pointwise_A(s, k)
        self.cell_blocks = CoarseBlocks(s, s, k)
        self.__positions = dict(
            (n, dict((tuple(c.index), i) for i, c in enumerate(cubes)))
            for n, (cubes, _) in levels.items())

    def matrices(self, n):
        if n == 0:
            return self.cell_matrices
        return self.levels[n][1]

    def cubes(self, n):
        return self.levels[n][0]

    def indices(self, n):
        if n == 0:
            return self.cells
        return numpy.array([c.index for c in self.cubes(n)])

    def central(self, top, n):
        '''Mask over level n entries lying inside the central cube_top.'''
        if n == 0:
            index = self.geometry.subcube_index(self.cells, top)
        else:
            ratio = 3 ** (top - n)
            index = (2 * self.indices(n) + ratio) // (2 * ratio)
        return numpy.all(index == 0, axis = 1)

    def children(self, n, position):
        '''Positions at level n - 1 of the children of entry position.'''
        cube = self.cubes(n)[position]
        lookup = self.__positions[n - 1]
        return [lookup[tuple(c.index)] for c in cube.subcubes(n - 1)]


def subcube_count(d, m):
    return sum(3 ** ((m - n) * d) for n in range(1, m + 1))


def build_ladder(field, m, config = None, geometry = None, pool = None):
    if m < 1:
        raise ValueError('The ladder needs m >= 1')
    geometry = geometry or make_adapted_geometry(numpy.eye(field.d))
    count = subcube_count(field.d, m)
    if count > MAX_SUBCUBES:
        raise BudgetExceeded(count, MAX_SUBCUBES, 'Ladder of level %d' % m)
    config = config or SolveConfig()
    top = geometry.cube(m)
    levels = {}
    asymmetry = 0.
    with using_pool(pool) as pool:
        for n in range(m, 0, -1):
            cubes = top.subcubes(n)
            results = pool.map(
                lambda cube: coarse_matrix(field, cube, config), cubes)
            levels[n] = (cubes, numpy.array([r.M for r in results]))
            asymmetry = max([asymmetry] + [r.asymmetry for r in results])
            logger.info('Ladder level %d: %d cubes', n, len(cubes))
    domain = top.domain()
    cells = domain.cells()
    return Ladder(field, geometry, m, levels, cells, asymmetry)


def _inverse_sqrt(matrix, what):
    eigenvalues, vectors = numpy.linalg.eigh(_sym(matrix))
    if eigenvalues[0] <= 0:
        raise DegenerateMatrix(what, float(eigenvalues[0]))
    return (vectors / numpy.sqrt(eigenvalues)) @ vectors.T


def adapted_to(A_bar, k0 = DEFAULT_K0):
    return make_adapted_geometry(extract_blocks(_sym(
        numpy.asarray(A_bar, dtype = numpy.float64))).s, k0)


def _ladder_for(field, m, config, pool, ladder, A_bar):
    if ladder is None:
        return build_ladder(field, m, config, adapted_to(A_bar), pool)
    if ladder.m != m:
        raise ValueError('Ladder was built for level %d' % ladder.m)
    return ladder


# ----------------------------------------------------------------------------
#   Homogenization error

def _error_forms(blocks, s_bar, a_bar):
    '''Symmetric d x d matrices W with e.W e equal to
    J(s_bar^-1/2 e, a_bar^t s_bar^-1/2 e) + J*(s_bar^-1/2 e, a_bar s_bar^-1/2 e)
    for every set of blocks.'''
    G = _inverse_sqrt(s_bar, 's_bar')
    d = G.shape[0]
    forms = 0.
    for H, k in [(a_bar.T @ G, blocks.k), (a_bar @ G, -blocks.k)]:
        # Both p and q are linear in e: p = G e, q = H e.
        R = H[None] + k @ G
        S_inv_R = numpy.linalg.solve(blocks.s_star, R)
        forms = forms + 0.5 * (
            numpy.einsum('ai,nab,bj->nij', G, blocks.s, G) +
            numpy.einsum('nai,naj->nij', R, S_inv_R)) - \
            0.5 * (G.T @ H + H.T @ G)[None]
    return _sym(forms.reshape(-1, d, d))


def _level_maxima(ladder, s_bar, a_bar):
    '''Largest eigenvalue of the error form over the entries of every
    level, with level 0 over cells.'''
    maxima = {}
    for n in range(0, ladder.m + 1):
        if n == 0:
            blocks = ladder.cell_blocks
        else:
            blocks = extract_blocks(ladder.matrices(n))
        forms = _error_forms(blocks, s_bar, a_bar)
        maxima[n] = max(0., float(numpy.max(numpy.linalg.eigvalsh(forms))))
    return maxima


def _homogenized_blocks(A_bar):
    blocks = extract_blocks(A_bar)
    return blocks.s, blocks.s + blocks.k


@maybe_throw
def homogenization_error_Es(field, m, s_exponent, A_bar, config = None,
        pool = None, ladder = None):
    '''Scale weighted sum over levels j <= m of the largest J + J* defect of
    the level j subcubes.  Below the cell scale the field is cellwise
    constant, so the levels j <= 0 all repeat the per cell value and their
    geometric tail is summed in closed form.'''
    if not 0 < s_exponent < 0.5:
        raise ValueError('s_exponent must lie in (0, 1/2)')
    ladder = _ladder_for(field, m, config, pool, ladder, A_bar)
    s_bar, a_bar = _homogenized_blocks(A_bar)
    maxima = _level_maxima(ladder, s_bar, a_bar)
    w = 3. ** (-2 * s_exponent)
    total = (1 - w) * sum(
        w ** (m - j) * maxima[j] for j in range(1, m + 1)) + \
        w ** m * maxima[0]
    return float(numpy.sqrt(total))


class DefectCurve(object):
    __slots__ = [
        'm',
        'R',                # Dictionary n -> max defect over level n
        'E_tilde',          # Scale weighted sum of defect square roots
        's_exponent',
        'gamma_hat', 'theta_hat', 'X_hat',
        'points',           # (top, n, R) triples used by the fit
    ]

    def __init__(self, m, R, E_tilde, s_exponent, gamma_hat, theta_hat,
            X_hat, points):
        self.m = m
        self.R = R
        self.E_tilde = E_tilde
        self.s_exponent = s_exponent
        self.gamma_hat = gamma_hat
        self.theta_hat = theta_hat
        self.X_hat = X_hat
        self.points = points

    def __repr__(self):
        return 'DefectCurve(R=%s, theta=%r, X=%r)' % (
            self.R, self.theta_hat, self.X_hat)


def _defects(matrices, A_bar_inv_sqrt, A_bar):
    normalized = A_bar_inv_sqrt @ (matrices - A_bar) @ A_bar_inv_sqrt
    largest = numpy.linalg.eigvalsh(_sym(normalized))[..., -1]
    return numpy.maximum(largest, 0.)


def _fit_decay(points, gamma):
    '''Least squares fit of log R = gamma ln3 (top - n) - theta ln3 top + c
    over points with positive R.  Returns (gamma, theta, X).'''
    usable = [(t, n, r) for t, n, r in points if r > 0]
    columns = 2 if gamma is not None else 3
    if len(usable) < columns:
        return float('nan'), float('nan'), float('nan')
    top = numpy.array([t for t, _, _ in usable], dtype = float)
    level = numpy.array([n for _, n, _ in usable], dtype = float)
    logs = numpy.log([r for _, _, r in usable])
    ln3 = numpy.log(3.)
    if gamma is None:
        design = numpy.stack(
            [top - level, top, numpy.ones_like(top)], axis = 1)
        solution, _, rank, _ = numpy.linalg.lstsq(design, logs, rcond = None)
        if rank < 3:
            return float('nan'), float('nan'), float('nan')
        gamma_hat = solution[0] / ln3
        theta_hat = -solution[1] / ln3
    else:
        design = numpy.stack([top, numpy.ones_like(top)], axis = 1)
        shifted = logs - gamma * ln3 * (top - level)
        solution, _, rank, _ = numpy.linalg.lstsq(design, shifted, rcond = None)
        if rank < 2:
            return float('nan'), float('nan'), float('nan')
        gamma_hat = float(gamma)
        theta_hat = -solution[0] / ln3

    if theta_hat <= 0:
        return float(gamma_hat), float(theta_hat), float('inf')
    # Smallest X with R <= 3^(gamma (top - n)) (X / 3^top)^theta everywhere,
    # in logarithms since a small theta overflows.
    log_X = max(
        t * ln3 + (numpy.log(r) - gamma_hat * ln3 * (t - n)) / theta_hat
        for t, n, r in usable)
    X_hat = float('inf') if log_X > LOG_FLOAT_MAX else math.exp(log_X)
    return float(gamma_hat), float(theta_hat), X_hat


@maybe_throw
def coarse_defect(field, m, gamma, A_bar, config = None, pool = None,
        ladder = None, s_exponent = None):
    '''R(n): the largest positive part of A_bar^-1/2 (A - A_bar) A_bar^-1/2
    over the level n subcubes of cube_m, with n = 0 taken over cells.  The
    decay fit uses the central cubes cube_t, t <= m, of the same ladder;
    gamma, when given, is held fixed in the fit.'''
    if s_exponent is None:
        s_exponent = 0.25 + 0.25 * gamma if gamma is not None else 0.4
    if not 0 < s_exponent < 1:
        raise ValueError('s_exponent must lie in (0, 1)')
    ladder = _ladder_for(field, m, config, pool, ladder, A_bar)
    A_bar = _sym(numpy.asarray(A_bar, dtype = numpy.float64))
    inv_sqrt = _inverse_sqrt(A_bar, 'A_bar')

    per_level = dict(
        (n, _defects(ladder.matrices(n), inv_sqrt, A_bar))
        for n in range(0, m + 1))
    R = dict((n, float(values.max())) for n, values in per_level.items())

    w = 3. ** (-s_exponent)
    E_tilde = sum(w ** (m - k) * numpy.sqrt(R[k]) for k in range(1, m + 1)) \
        + numpy.sqrt(R[0]) * w ** m / (1 - w)

    points = []
    for top in range(1, m + 1):
        for n in range(0, top + 1):
            inside = ladder.central(top, n)
            points.append((top, n, float(per_level[n][inside].max())))
    gamma_hat, theta_hat, X_hat = _fit_decay(points, gamma)
    return DefectCurve(m, R, float(E_tilde), s_exponent,
        gamma_hat, theta_hat, X_hat, points)


def error_upper_bound(defects, m, s_exponent):
    '''Bound on homogenization_error_Es from a defect curve: each J + J*
    term is at most twice the defect of its cube.'''
    w = 3. ** (-2 * s_exponent)
    R = defects.R if isinstance(defects, DefectCurve) else defects
    total = (1 - w) * sum(
        w ** (m - j) * 2 * R[j] for j in range(1, m + 1)) + \
        w ** m * 2 * R[0]
    return float(numpy.sqrt(total))


# ----------------------------------------------------------------------------
#   Subadditivity

def _children_gap(parent, children, volumes):
    mean = numpy.einsum('c,cij->ij', volumes, children) / volumes.sum()
    return float(numpy.linalg.eigvalsh(_sym(mean - parent))[0])


@maybe_throw
def subadditivity_check(field, parent, child_level, config = None,
        pool = None):
    '''Smallest eigenvalue of the volume weighted mean of the children's
    A minus the parent's A.'''
    parent_matrix = coarse_matrix(field, parent, config).M
    if child_level == parent.level:
        return 0.
    children = parent.subcubes(child_level)
    with using_pool(pool) as pool:
        results = pool.map(
            lambda cube: coarse_matrix(field, cube, config), children)
    volumes = numpy.array([float(c.volume) for c in children])
    return _children_gap(
        parent_matrix, numpy.array([r.M for r in results]), volumes)


def ladder_subadditivity(ladder):
    '''Smallest subadditivity gap over every parent and child level pair of
    the ladder, keyed by parent level.'''
    result = {}
    for n in range(2, ladder.m + 1):
        gaps = []
        matrices = ladder.matrices(n - 1)
        cubes = ladder.cubes(n - 1)
        for position in range(len(ladder.cubes(n))):
            children = ladder.children(n, position)
            volumes = numpy.array([float(cubes[c].volume) for c in children])
            gaps.append(_children_gap(
                ladder.matrices(n)[position], matrices[children], volumes))
        result[n] = min(gaps)
    return result


# ----------------------------------------------------------------------------
#   Scale report

class ScaleReport(object):
    '''Everything computed on one ladder, serializable as JSON and CSV.'''

    def __init__(self, ladder, A_bar, E_s, defects, bound, subadditivity):
        self.ladder = ladder
        self.A_bar = A_bar
        self.E_s = E_s
        self.defects = defects
        self.bound = bound
        self.subadditivity = subadditivity
        levels = range(1, ladder.m + 1)
        all_matrices = numpy.concatenate([ladder.matrices(n) for n in levels])
        self.asymmetry = ladder.asymmetry
        self.min_eigenvalue = float(
            numpy.linalg.eigvalsh(all_matrices)[:, 0].min())
        self.loewner = float(min(
            numpy.linalg.eigvalsh(_sym(b.s - b.s_star))[:, 0].min()
            for b in [extract_blocks(ladder.matrices(n)) for n in levels]))

    def checks(self):
        return {
            'psd': self.min_eigenvalue >= -1e-8,
            'symmetry': self.asymmetry <= ASYMMETRY_WARNING,
            'loewner': self.loewner >= -1e-8,
            'subadditivity': all(
                gap >= -1e-6 for gap in self.subadditivity.values()),
        }

    @property
    def passed(self):
        return all(self.checks().values())

    def as_dict(self):
        ladder = self.ladder
        scales = []
        for n in range(0, ladder.m + 1):
            matrices = ladder.matrices(n)
            scales.append({
                'n': n,
                'count': len(matrices),
                'mean': matrices.mean(axis = 0).tolist(),
                'max': matrices.max(axis = 0).tolist(),
                'defect': self.defects.R[n],
            })
        return {
            'm': ladder.m,
            'd': ladder.d,
            'A_bar': numpy.asarray(self.A_bar).tolist(),
            's_exponent': self.defects.s_exponent,
            'E_s': self.E_s,
            'E_tilde': self.defects.E_tilde,
            'E_s_bound': self.bound,
            'gamma_hat': self.defects.gamma_hat,
            'theta_hat': self.defects.theta_hat,
            'X_hat': self.defects.X_hat,
            'scales': scales,
            'subadditivity': dict(
                (str(n), gap) for n, gap in sorted(self.subadditivity.items())),
            'min_eigenvalue': self.min_eigenvalue,
            'loewner': self.loewner,
            'checks': self.checks(),
        }

    def write_json(self, output, extra = None):
        data = self.as_dict()
        if extra:
            data.update(extra)
        json.dump(_finite(data), output, sort_keys = True, indent = 1)
        output.write('\n')

    def write_csv(self, output):
        ladder = self.ladder
        n2 = (2 * ladder.d) ** 2
        writer = csv.writer(output, lineterminator = '\r\n')
        writer.writerow(['n'] + ['z%d' % i for i in range(ladder.d)] +
            ['A%d%d' % divmod(i, 2 * ladder.d) for i in range(n2)])
        for n in range(ladder.m, -1, -1):
            for index, M in zip(ladder.indices(n), ladder.matrices(n)):
                writer.writerow([n] + [int(i) for i in index] +
                    [repr(float(x)) for x in M.ravel()])


def _finite(value):
    '''Replaces non finite floats by strings so the JSON stays standard.'''
    if isinstance(value, dict):
        return dict((k, _finite(v)) for k, v in value.items())
    elif isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    elif isinstance(value, float) and not numpy.isfinite(value):
        return str(value)
    return value


@maybe_throw
def scale_report(field, m, A_bar, s_exponent, gamma = None, config = None,
        pool = None, k0 = DEFAULT_K0):
    '''Ladder over the cube of level m adapted to A_bar, with every error,
    defect and structural check computed on it.'''
    ladder = build_ladder(field, m, config, adapted_to(A_bar, k0), pool)
    E_s = homogenization_error_Es(field, m, s_exponent, A_bar, ladder = ladder)
    defects = coarse_defect(field, m, gamma, A_bar, ladder = ladder,
        s_exponent = s_exponent)
    bound = error_upper_bound(defects, m, s_exponent)
    return ScaleReport(ladder, A_bar, E_s, defects, bound,
        ladder_subadditivity(ladder))
