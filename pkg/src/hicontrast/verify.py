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

'''Measurable forms of the large scale regularity estimates.

Measurements:

    caccioppoli_ratio(field, m, boundary, lambda_bar)
    caccioppoli_profile(field, m, boundary, lambda_bar, fractions)
    caccioppoli_ball(field, R, r, boundary, lambda_bar, geometry)
    harmonic_approx_error(field, m, A_bar, s_exponent, boundary)
    sobolev_control_ratio(field, m, A_bar, s_exponent, boundary)
    liouville_two_sided(field, k, scales)
    excess_decay_curve(field, u, k, radii)
    corrector_space_dimension(field, k)

Harnesses run one measurement over a list of fields and return a
VerificationRecord with a PASS/FAIL verdict, see HARNESSES.'''

import csv
import json
import logging
import math

import numpy
import scipy.linalg

from .coarsegrain import Failure, _finite, coarse_defect, extract_blocks, \
    maybe_throw
from .fem import (DiscreteFunction, Mesh, SolveConfig, periodic_correctors,
    homogenized_periodic, solve_dirichlet)
from .fieldgen import cell_uniforms, constant_field, pointwise_A
from .geometry import Domain, make_adapted_geometry
from .harmonics import (Polynomial, abar_harmonic_basis, dim_formula,
    project_onto_Abar_k)
from .sobolev import (NormConfig, energy_seminorm, l2_mean_norm,
    neg_sobolev_seminorm)
from .workers import using_pool

__all__ = [
    'AffineBoundary',       # x -> e.x
    'PolynomialBoundary',   # x -> p(x)
    'RandomSmoothBoundary', # Seeded sum of low frequency cosines
    'VerificationRecord',
    'caccioppoli_ratio',
    'caccioppoli_profile',
    'caccioppoli_ball',
    'harmonic_approx_error',
    'sobolev_control_ratio',
    'liouville_two_sided',
    'excess_decay_curve',
    'corrector_space_dimension',
    'run_harness',
    'HARNESSES',
]

logger = logging.getLogger(__name__)

STREAM_BOUNDARY = 5


# ----------------------------------------------------------------------------
#   Boundary data

class AffineBoundary(object):
    def __init__(self, e):
        self.e = numpy.asarray(e, dtype = numpy.float64).reshape(-1)

    def __call__(self, points):
        return numpy.asarray(points) @ self.e

    def as_dict(self):
        return {'kind': 'affine', 'e': self.e.tolist()}


class PolynomialBoundary(object):
    def __init__(self, polynomial):
        self.polynomial = polynomial

    def __call__(self, points):
        return self.polynomial.evaluate(points)

    def as_dict(self):
        return {'kind': 'polynomial', 'polynomial': self.polynomial.as_dict()}


class RandomSmoothBoundary(object):
    '''Sum of modes cos(2 pi w.x / length + phase) with integer frequencies
    |w_i| <= 2 and amplitudes decaying with |w|, all drawn from the seed.'''

    def __init__(self, seed, d, length, modes = 6):
        self.seed = seed
        self.length = float(length)
        u = cell_uniforms(seed, STREAM_BOUNDARY, modes)
        self.frequencies = numpy.floor(5 * u[:, :d]).astype(int) - 2
        self.phases = 2 * numpy.pi * u[:, 2]
        self.amplitudes = (2 * u[:, 3] - 1) / (
            1 + numpy.sum(self.frequencies ** 2, axis = 1))

    def __call__(self, points):
        angles = 2 * numpy.pi * (numpy.asarray(points) @ self.frequencies.T) \
            / self.length + self.phases
        return self.length * numpy.cos(angles) @ self.amplitudes

    def as_dict(self):
        return {'kind': 'random-smooth', 'seed': self.seed,
            'length': self.length}


def make_boundary(kind, d, length, seed = 0, e = None, polynomial = None):
    if kind == 'affine':
        return AffineBoundary(numpy.eye(d)[0] if e is None else e)
    elif kind == 'polynomial':
        if polynomial is None:
            # A cubic in x1 is harmonic for no nondegenerate s_bar.
            polynomial = Polynomial(d, {(3,) + (0,) * (d - 1): 1}).scale(
                1. / length)
        return PolynomialBoundary(polynomial)
    elif kind == 'random':
        return RandomSmoothBoundary(seed, d, length)
    else:
        raise ValueError('Unknown boundary kind %r' % kind)


# ----------------------------------------------------------------------------
#   Caccioppoli ratios

def _identity_geometry(d):
    return make_adapted_geometry(numpy.eye(d))


def _scaled_cube_domain(geometry, m, fraction):
    '''Cells of cube_m whose centres lie in fraction * cube_m.'''
    domain = geometry.cube(m).domain()
    cells = domain.box_cells()
    reference = geometry.to_reference(cells)
    inside = numpy.all(numpy.abs(reference) < 0.5 * fraction * 3 ** m, axis = -1)
    return Domain(domain.origin, domain.mask & inside)


def _ratio(numerator, denominator):
    if denominator == 0:
        raise ValueError('The solution vanishes: boundary data is zero')
    return numerator / denominator


def caccioppoli_ratio(field, m, boundary, lambda_bar, geometry = None,
        config = None, inner = None):
    '''Energy on the inner region, cube_(m-1) by default, over
    lambda_bar^1/2 3^-m times the L2 norm on cube_m.'''
    if m < 1:
        raise ValueError('Caccioppoli ratio needs m >= 1')
    geometry = geometry or _identity_geometry(field.d)
    cube = geometry.cube(m)
    u = solve_dirichlet(field, cube, boundary, config)
    if inner is None:
        inner = geometry.cube(m - 1).domain()
    energy = energy_seminorm(u, field, inner)
    return _ratio(energy,
        math.sqrt(lambda_bar) * 3. ** -m * l2_mean_norm(u, cube.domain()))


def caccioppoli_profile(field, m, boundary, lambda_bar, fractions,
        geometry = None, config = None):
    '''Ratios on the inner regions r cube_m for each r in fractions, with a
    fit of ratio ~ C (1 - r)^-kappa.  Returns (ratios, kappa, C).'''
    geometry = geometry or _identity_geometry(field.d)
    cube = geometry.cube(m)
    u = solve_dirichlet(field, cube, boundary, config)
    denominator = math.sqrt(lambda_bar) * 3. ** -m * \
        l2_mean_norm(u, cube.domain())
    ratios = []
    for r in fractions:
        if not 0 < r < 1:
            raise ValueError('Fractions must lie in (0, 1)')
        inner = _scaled_cube_domain(geometry, m, r)
        ratios.append(_ratio(energy_seminorm(u, field, inner), denominator))
    if len(fractions) >= 2:
        design = numpy.stack([
            -numpy.log(1 - numpy.asarray(fractions)),
            numpy.ones(len(fractions))], axis = 1)
        (kappa, log_c), *_ = numpy.linalg.lstsq(
            design, numpy.log(ratios), rcond = None)
    else:
        kappa, log_c = float('nan'), float('nan')
    return ratios, float(kappa), float(numpy.exp(log_c))


def caccioppoli_ball(field, R, r, boundary, lambda_bar, geometry,
        config = None):
    '''Adapted ball form: energy on B_r over
    lambda_bar^1/2 (R - r)^-1 times the L2 norm on B_R.'''
    if not 0 < r < R:
        raise ValueError('Need 0 < r < R')
    outer = geometry.ball(R)
    u = solve_dirichlet(field, outer, boundary, config)
    energy = energy_seminorm(u, field, geometry.ball(r).domain())
    return _ratio(energy,
        math.sqrt(lambda_bar) / (R - r) * l2_mean_norm(u, outer.domain()))


# ----------------------------------------------------------------------------
#   Harmonic approximation

def _homogenized_field(A_bar, d):
    blocks = extract_blocks(A_bar)
    k = 0.5 * (blocks.k - blocks.k.T)
    return constant_field(d, blocks.s, k, L_cells = 1), blocks.s, blocks.s + k


def _cell_fluxes(u, field):
    '''Cell averages over the domain box of grad u and of a grad u.'''
    mesh = u.mesh
    s, k = mesh.element_coefficients(field)
    gradients = u.centre_gradients()
    fluxes = numpy.einsum('cab,cb->ca', s + k, gradients)
    return u.cell_average(gradients), u.cell_average(fluxes)


def _matrix_power(matrix, power):
    eigenvalues, vectors = numpy.linalg.eigh(0.5 * (matrix + matrix.T))
    return (vectors * numpy.maximum(eigenvalues, 0.) ** power) @ vectors.T


def harmonic_approx_error(field, m, A_bar, s_exponent, boundary,
        geometry = None, config = None, direction = 'forward'):
    '''Returns (l2_term, hs_term, energy_ref) comparing u, a-harmonic with
    the given boundary data on cube_m, with u_bar, harmonic for the constant
    homogenized coefficient with the same data.  In the reverse direction
    the boundary data must itself be a homogenized harmonic polynomial.'''
    d = field.d
    geometry = geometry or _identity_geometry(d)
    A_bar = numpy.asarray(A_bar, dtype = numpy.float64)
    homogenized, s_bar, a_bar = _homogenized_field(A_bar, d)
    if direction == 'reverse':
        if not isinstance(boundary, PolynomialBoundary) or \
                not boundary.polynomial.divergence_form(s_bar).is_zero():
            raise ValueError(
                'Reverse direction needs homogenized harmonic polynomial data')
    elif direction != 'forward':
        raise ValueError('Unknown direction %r' % direction)

    cube = geometry.cube(m)
    domain = cube.domain()
    u = solve_dirichlet(field, cube, boundary, config)
    u_bar = solve_dirichlet(homogenized, cube, boundary, config)
    lambda_bar = float(numpy.linalg.eigvalsh(s_bar)[0])

    l2_term = 3. ** -m * math.sqrt(lambda_bar) * l2_mean_norm(u - u_bar)
    gradient, flux = _cell_fluxes(u, field)
    gradient_bar, flux_bar = _cell_fluxes(u_bar, homogenized)
    stacked = numpy.concatenate(
        [gradient - gradient_bar, flux - flux_bar], axis = -1)
    hs_term = 3. ** (-m * s_exponent) * neg_sobolev_seminorm(stacked, domain,
        config = NormConfig(s_exponent), weight = _matrix_power(A_bar, 0.5))
    energy_ref = energy_seminorm(u, field)
    return l2_term, hs_term, energy_ref


def sobolev_control_ratio(field, m, A_bar, s_exponent, boundary,
        geometry = None, config = None):
    '''3^-ms [s_bar^-1/2 (a grad u - a_bar grad u)] in the negative norm
    over the energy norm of u, for u a-harmonic with the given data.'''
    d = field.d
    geometry = geometry or _identity_geometry(d)
    _, s_bar, a_bar = _homogenized_field(A_bar, d)
    cube = geometry.cube(m)
    u = solve_dirichlet(field, cube, boundary, config)
    gradient, flux = _cell_fluxes(u, field)
    mismatch = flux - gradient @ a_bar.T
    seminorm = neg_sobolev_seminorm(mismatch, cube.domain(),
        config = NormConfig(s_exponent), weight = _matrix_power(s_bar, -0.5))
    return _ratio(3. ** (-m * s_exponent) * seminorm,
        energy_seminorm(u, field))


# ----------------------------------------------------------------------------
#   Liouville and corrector space

def _periodic_values(torus_values, domain, refine, L):
    '''Nodal values on domain of a function given on the periodic node grid
    of the torus of L cells.'''
    mesh = Mesh(domain, refine)
    nodes = mesh.node_coordinates()
    index = numpy.mod(
        numpy.rint((nodes + 0.5) * refine).astype(int), refine * L)
    return torus_values[tuple(index.T)]


def _corrected_affine(field, directions, domain, config):
    '''Nodal values on domain of e.x + phi_e for every direction e.'''
    correctors, _, _ = periodic_correctors(field, directions, config)
    L = field.L_cells
    mesh = Mesh(domain, config.refine)
    x = mesh.node_coordinates()
    result = []
    for e, phi in zip(directions, correctors):
        torus = phi.values[(slice(0, -1),) * field.d]
        values = x @ e + _periodic_values(torus, domain, config.refine, L)
        result.append(DiscreteFunction(values, domain, config.refine))
    return result


def _interior_residual(field, u):
    mesh = u.mesh
    s, k = mesh.element_coefficients(field)
    K = mesh.assemble((s + k)[:, None, :, None, :])
    values = u.values.reshape(-1)
    interior = mesh.interior_nodes
    boundary = mesh.boundary_nodes
    rhs = K[interior][:, boundary] @ values[boundary]
    norm = numpy.linalg.norm(rhs)
    if norm == 0:
        return 0.
    return float(numpy.linalg.norm(K[interior] @ values) / norm)


def _liouville_rows(field, k, scales, A_bar = None, defects = None,
        config = None, geometry = None):
    if k not in (0, 1):
        raise ValueError('Exact corrected solutions exist only for k <= 1')
    config = config or SolveConfig()
    d = field.d
    geometry = geometry or _identity_geometry(d)
    if A_bar is None:
        a_bar = homogenized_periodic(field, config)
        s_bar = 0.5 * (a_bar + a_bar.T)
    else:
        s_bar = extract_blocks(A_bar).s
    theta = getattr(defects, 'theta_hat', float('nan'))
    X = getattr(defects, 'X_hat', float('nan'))

    rows = []
    directions = numpy.eye(d) if k == 1 else numpy.zeros((0, d))
    for n in scales:
        domain = geometry.cube(n).domain()
        functions = [(
            'constant', DiscreteFunction.interpolate(
                lambda x: numpy.ones(len(x)), domain, config.refine),
            DiscreteFunction.interpolate(
                lambda x: numpy.ones(len(x)), domain, config.refine),
            numpy.zeros(d))]
        if len(directions):
            corrected = _corrected_affine(field, directions, domain, config)
            for i, (e, u) in enumerate(zip(directions, corrected)):
                u_bar = DiscreteFunction.interpolate(
                    lambda x, e = e: x @ e, domain, config.refine)
                functions.append(('x%d' % (i + 1), u, u_bar, e))
        for name, u, u_bar, e in functions:
            left = 3. ** -n * l2_mean_norm(u - u_bar)
            energy = float(numpy.sqrt(e @ s_bar @ e))
            if numpy.isfinite(theta) and numpy.isfinite(X):
                right = (X / 3. ** n) ** (theta / 2) * energy
            else:
                right = energy
            rows.append({
                'seed': field.seed, 'scale': n, 'basis': name,
                'left': left, 'right': right,
                'theta_hat': theta, 'X_hat': X,
                'ratio': left / right if right > 0 else 0.,
                'residual': _interior_residual(field, u),
            })
    return rows


def liouville_two_sided(field, k, scales, A_bar = None, defects = None,
        config = None, geometry = None, residual_tol = None):
    '''For each s_bar harmonic polynomial u_bar of degree at most k <= 1
    builds u in the corrected space and measures 3^-n |u - u_bar| on cube_n
    against (X_hat / 3^n)^(theta_hat / 2) |s_bar^1/2 grad u_bar|.  PASS
    needs decay across scales on average and exactly a-harmonic u.'''
    rows = _liouville_rows(field, k, scales, A_bar, defects, config, geometry)
    summary, passed = _verdict_liouville(rows, {'residual_tol': residual_tol})
    metadata = {
        'fields': [field.ensemble_tag], 'seeds': [field.seed],
        'settings': {'k': k, 'scales': list(scales)}}
    return VerificationRecord('liouville', metadata, rows, summary, passed)


def excess_decay_curve(field, u, k, radii, s_bar = None, geometry = None):
    '''E_k(r) = r^-k inf over s_bar harmonic p of degree <= k of the L2
    distance of u to p on the adapted ball B_r, for each radius.'''
    d = field.d
    if any(r < 3 for r in radii):
        raise ValueError('Excess radii below 3 cells are meaningless')
    if s_bar is None:
        s_bar = numpy.eye(d) if geometry is None else geometry.s_bar
    geometry = geometry or make_adapted_geometry(s_bar)
    basis = abar_harmonic_basis(d, k, s_bar, geometry.q0)

    excess, norms = [], []
    for r in radii:
        ball = geometry.ball(r)
        p, residual = project_onto_Abar_k(u, ball, k, basis)
        excess.append(r ** -k * residual)
        cells = ball.domain().cells()
        norms.append(float(numpy.sqrt(numpy.mean(p.evaluate(cells) ** 2))))
    ratios = [
        excess[i + 1] / excess[i] if excess[i] > 0 else 0.
        for i in range(len(radii) - 1)]
    positive = [(r, e) for r, e in zip(radii, excess) if e > 0]
    if len(positive) >= 2:
        slope = numpy.polyfit(
            numpy.log([r for r, _ in positive]),
            numpy.log([e for _, e in positive]), 1)[0]
    else:
        slope = float('nan')
    return {
        'radii': list(radii), 'excess': excess, 'ratios': ratios,
        'norms': norms, 'slope': float(slope)}


def corrector_space_dimension(field, k, config = None, tolerance = 1e-8):
    '''Numerical rank of the Gram matrix, on the period cell, of the family
    {1} and, for k = 1, e.x + phi_e over the coordinate directions together
    with redundant directions that the span already contains.  Returns
    (count, singular values, gap between retained and discarded).'''
    if k not in (0, 1):
        raise ValueError('Only k = 0 and k = 1 are supported')
    config = config or SolveConfig()
    d = field.d
    L = field.L_cells
    domain = Domain.box(numpy.zeros(d, dtype = int), (L,) * d)
    family = [DiscreteFunction.interpolate(
        lambda x: numpy.ones(len(x)), domain, config.refine)]
    if k == 1:
        if d == 1:
            directions = numpy.array([[1.], [2.]])
        else:
            directions = numpy.array(
                [[1., 0.], [0., 1.], [1., 1.], [1., -1.]])
        family.extend(_corrected_affine(field, directions, domain, config))

    mesh = family[0].mesh
    values = numpy.stack([f.gauss_values() for f in family])
    gram = numpy.einsum('q,icq,jcq->ij', mesh.weights, values, values) / \
        mesh.volume
    singular = scipy.linalg.svdvals(gram)
    retained = singular > tolerance * singular[0]
    count = int(retained.sum())
    discarded = singular[~retained]
    gap = float(singular[retained][-1] / discarded[0]) \
        if len(discarded) and discarded[0] > 0 else float('inf')
    return count, singular.tolist(), gap


# ----------------------------------------------------------------------------
#   Verification records and harnesses

class VerificationRecord(object):
    __slots__ = [
        'harness',
        'metadata',         # Field, ensemble and settings description
        'measurements',     # List of flat dictionaries
        'summary',          # Dictionary of statistics
        'passed',
        'failures',         # Number of samples that raised
    ]

    def __init__(self, harness, metadata, measurements, summary, passed,
            failures = 0):
        self.harness = harness
        self.metadata = metadata
        self.measurements = measurements
        self.summary = summary
        self.passed = bool(passed)
        self.failures = failures

    def __repr__(self):
        return 'VerificationRecord(%s, %d measurements, %s)' % (
            self.harness, len(self.measurements),
            'PASS' if self.passed else 'FAIL')

    def as_dict(self):
        return {
            'harness': self.harness,
            'metadata': self.metadata,
            'measurements': self.measurements,
            'summary': self.summary,
            'verdict': 'PASS' if self.passed else 'FAIL',
            'failures': self.failures,
        }

    def write_json(self, output, extra = None):
        data = self.as_dict()
        if extra:
            data.update(extra)
        json.dump(_finite(data), output, sort_keys = True, indent = 1)
        output.write('\n')

    def write_csv(self, output):
        columns = sorted(set().union(*[m.keys() for m in self.measurements])) \
            if self.measurements else []
        writer = csv.writer(output, lineterminator = '\r\n')
        writer.writerow(columns)
        for row in self.measurements:
            writer.writerow([_csv_value(row.get(c, '')) for c in columns])


def _csv_value(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ' '.join(_csv_value(v) for v in value)
    return value


def _lambda_bar(field, settings, config):
    value = settings.get('lambda_bar')
    if value:
        return float(value)
    a_bar = homogenized_periodic(field, config)
    return float(numpy.linalg.eigvalsh(0.5 * (a_bar + a_bar.T))[0])


def _A_bar(field, settings, config):
    a_bar = homogenized_periodic(field, config)
    return pointwise_A(0.5 * (a_bar + a_bar.T), 0.5 * (a_bar - a_bar.T))


def _measure_caccioppoli(field, settings, config):
    m = settings['m']
    boundary = make_boundary(settings['boundary'], field.d, 3 ** m,
        seed = field.seed)
    contrasts = settings.get('contrasts')
    if not contrasts:
        ratio = caccioppoli_ratio(field, m, boundary,
            _lambda_bar(field, settings, config), config = config)
        return [{'seed': field.seed, 'm': m, 'ratio': ratio}]

    # Same phases and boundary data at every contrast, lambda_bar from each.
    rows = []
    for contrast in contrasts:
        swept = field.with_contrast(contrast)
        ratio = caccioppoli_ratio(swept, m, boundary,
            _lambda_bar(swept, {}, config), config = config)
        rows.append({'seed': field.seed, 'm': m, 'contrast': contrast,
            'ratio': ratio})
    return rows


def _measure_approx(field, settings, config):
    rows = []
    A_bar = _A_bar(field, settings, config)
    for m in settings['scales']:
        boundary = make_boundary(settings['boundary'], field.d, 3 ** m,
            seed = field.seed)
        l2, hs, energy = harmonic_approx_error(field, m, A_bar,
            settings['s_exponent'], boundary, config = config)
        rows.append({'seed': field.seed, 'm': m, 'l2_term': l2,
            'hs_term': hs, 'energy_ref': energy,
            'ratio': (l2 + hs) / energy if energy > 0 else 0.})
    return rows


def _measure_liouville(field, settings, config):
    scales = settings['scales']
    A_bar = _A_bar(field, settings, config)
    defects = coarse_defect(field, max(scales), settings.get('gamma'), A_bar,
        config)
    return _liouville_rows(field, settings['k'], scales, A_bar, defects,
        config)


def _measure_excess(field, settings, config):
    k = settings['k']
    radii = settings['radii']
    a_bar = homogenized_periodic(field, config)
    s_bar = 0.5 * (a_bar + a_bar.T)
    geometry = make_adapted_geometry(s_bar)
    outer = geometry.ball(max(radii) + 1)
    boundary = make_boundary(settings['boundary'], field.d, max(radii),
        seed = field.seed)
    u = solve_dirichlet(field, outer, boundary, config)
    curve = excess_decay_curve(field, u, k, radii, geometry = geometry)
    return [
        {'seed': field.seed, 'radius': r, 'excess': e, 'norm': p}
        for r, e, p in zip(curve['radii'], curve['excess'], curve['norms'])]


def _measure_dims(field, settings, config):
    k = settings['k']
    count, singular, gap = corrector_space_dimension(field, k, config)
    return [{'seed': field.seed, 'k': k, 'dimension': count,
        'expected': dim_formula(field.d, k), 'gap': gap,
        'singular_values': singular}]


def _verdict_caccioppoli(rows, settings):
    ratios = [r['ratio'] for r in rows]
    limit = settings.get('max_ratio') or float('inf')
    summary = {'max_ratio': max(ratios), 'mean_ratio': float(numpy.mean(ratios))}
    passed = all(numpy.isfinite(ratios)) and max(ratios) <= limit
    if settings.get('contrasts'):
        # The largest ratio may grow by at most contrast_factor from the
        # lowest contrast to the highest.
        by_contrast = {}
        for row in rows:
            by_contrast.setdefault(row['contrast'], []).append(row['ratio'])
        maxima = dict((c, max(r)) for c, r in by_contrast.items())
        growth = maxima[max(maxima)] / maxima[min(maxima)]
        factor = settings.get('contrast_factor') or 3.
        summary['max_ratio_by_contrast'] = dict(
            (repr(c), maxima[c]) for c in sorted(maxima))
        summary['contrast_growth'] = growth
        passed = passed and growth <= factor
    return summary, passed


def _verdict_approx(rows, settings):
    ratios = [r['ratio'] for r in rows]
    limit = settings.get('max_ratio') or float('inf')
    return {'max_ratio': max(ratios)}, \
        all(numpy.isfinite(ratios)) and max(ratios) <= limit


def _verdict_liouville(rows, settings):
    by_basis = {}
    for row in rows:
        by_basis.setdefault((row['seed'], row['basis']), []).append(row)
    decays = []
    for series in by_basis.values():
        series.sort(key = lambda row: row['scale'])
        for a, b in zip(series, series[1:]):
            if a['left'] > 0:
                decays.append(b['left'] / a['left'])
    mean_decay = float(numpy.mean(decays)) if decays else 0.
    residual = max(row['residual'] for row in rows)
    tol = settings.get('residual_tol') or 1e-8
    return {'mean_decay': mean_decay, 'max_residual': residual}, \
        mean_decay < 1 and residual <= tol


def _verdict_excess(rows, settings):
    values = [r['excess'] for r in rows]
    return {'max_excess': max(values)}, all(numpy.isfinite(values))


def _verdict_dims(rows, settings):
    gap = settings.get('min_gap') or 1e3
    ok = all(r['dimension'] == r['expected'] and r['gap'] >= gap for r in rows)
    return {'dimensions': sorted(set(r['dimension'] for r in rows)),
        'min_gap': min(r['gap'] for r in rows)}, ok


HARNESSES = {
    'caccioppoli':  (_measure_caccioppoli, _verdict_caccioppoli),
    'approx':       (_measure_approx, _verdict_approx),
    'liouville':    (_measure_liouville, _verdict_liouville),
    'excess':       (_measure_excess, _verdict_excess),
    'dims':         (_measure_dims, _verdict_dims),
}


@maybe_throw
def run_harness(name, fields, settings, config = None, pool = None):
    '''Runs the named harness on every field, in parallel on the pool, and
    returns a VerificationRecord.  Samples raising an expected failure are
    counted; the verdict is FAIL if any sample failed.'''
    if name not in HARNESSES:
        raise ValueError('Unknown harness %r' % name)
    if name == 'excess' and any(r < 3 for r in settings.get('radii', [])):
        raise ValueError('Excess radii below 3 cells are meaningless')
    measure, verdict = HARNESSES[name]
    config = config or SolveConfig()
    with using_pool(pool) as pool:
        results = pool.map(
            lambda field: maybe_throw(measure)(field, settings, config,
                throw = False), fields)

    rows = []
    failures = 0
    for field, result in zip(fields, results):
        if isinstance(result, Failure):
            logger.warning('Sample %d failed: %s', field.seed, result)
            failures += 1
        else:
            rows.extend(result)
    if not rows:
        return VerificationRecord(name, {}, [], {}, False, failures)
    summary, passed = verdict(rows, settings)
    metadata = {
        'fields': [f.ensemble_tag for f in fields],
        'seeds': [f.seed for f in fields],
        'settings': dict(
            (key, value) for key, value in sorted(settings.items())),
    }
    return VerificationRecord(name, metadata, rows, summary,
        passed and failures == 0, failures)
