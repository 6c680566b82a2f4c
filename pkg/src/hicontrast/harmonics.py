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

'''Harmonic polynomials of a constant coefficient operator.

Polynomials carry exact rational coefficients, so that harmonicity of a basis
is checked without rounding.  A basis of the polynomials of degree at most k
annihilated by div(s_bar grad .) is built either by substituting q0^-1 x into
Euclidean solid harmonics, when s_bar is a multiple of q0 q0^T, or otherwise
as the exact null space of the operator degree by degree.'''

import json
import logging
import math
from fractions import Fraction

import numpy
import numpy.polynomial.legendre
import scipy.linalg
import sympy

from .fem import DiscreteFunction, Mesh
from .geometry import Domain

__all__ = [
    'Polynomial',           # Exact rational polynomial in d variables
    'HarmonicBasis',        # Basis of the s_bar harmonic polynomials
    'abar_harmonic_basis',
    'euclidean_harmonics',  # Solid harmonics of one degree
    'homogeneous_part',
    'project_onto_Abar_k',
    'dim_formula',
    'sphere_inner_product', # Mean over the sphere of p q
    'ball_mean_square',     # Volume normalized squared L2 norm on a ball
    'ProjectionError',
]

logger = logging.getLogger(__name__)

MAX_DEGREE = 6
DENOMINATOR_LIMIT = 10 ** 6


class ProjectionError(ValueError):
    def __init__(self, condition):
        ValueError.__init__(self, condition)
        self.condition = condition

    def __str__(self):
        return 'Basis is numerically degenerate on the region ' \
            '(condition number %.3e)' % self.condition


def _rational(value):
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return Fraction(float(value)).limit_denominator(DENOMINATOR_LIMIT)


def _rational_matrix(matrix):
    matrix = numpy.atleast_2d(numpy.asarray(matrix, dtype = object))
    return [[_rational(x) for x in row] for row in matrix]


class Polynomial(object):
    '''Polynomial in d variables with Fraction coefficients, held as a map
    from exponent tuples to nonzero coefficients.'''

    __slots__ = ['d', '__terms']

    def __init__(self, d, terms = None):
        self.d = d
        self.__terms = {}
        for exponent, coefficient in (terms or {}).items():
            exponent = tuple(int(e) for e in exponent)
            assert len(exponent) == d and min(exponent) >= 0, \
                'Bad exponent %r' % (exponent,)
            coefficient = _rational(coefficient)
            if coefficient:
                self.__terms[exponent] = \
                    self.__terms.get(exponent, 0) + coefficient
                if not self.__terms[exponent]:
                    del self.__terms[exponent]

    @classmethod
    def constant(cls, d, value):
        return cls(d, {(0,) * d: value})

    @classmethod
    def variable(cls, d, axis):
        exponent = [0] * d
        exponent[axis] = 1
        return cls(d, {tuple(exponent): 1})

    def terms(self):
        return sorted(self.__terms.items())

    def coefficient(self, exponent):
        return self.__terms.get(tuple(exponent), Fraction(0))

    def coefficient_array(self):
        '''Dense object array of coefficients indexed by exponent.'''
        n = max(self.degree, 0) + 1
        result = numpy.full((n,) * self.d, Fraction(0), dtype = object)
        for exponent, coefficient in self.__terms.items():
            result[exponent] = coefficient
        return result

    @property
    def degree(self):
        if not self.__terms:
            return -1
        return max(sum(e) for e in self.__terms)

    def is_zero(self):
        return not self.__terms

    def __repr__(self):
        if not self.__terms:
            return 'Polynomial(%d, 0)' % self.d
        return 'Polynomial(%d, %s)' % (self.d, ' + '.join(
            '%s*x^%s' % (c, e) for e, c in self.terms()))

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.d == other.d and \
            self.__terms == other.__terms

    def __hash__(self):
        return hash((self.d, tuple(self.terms())))

    def __add__(self, other):
        terms = dict(self.__terms)
        for exponent, coefficient in other.__terms.items():
            terms[exponent] = terms.get(exponent, 0) + coefficient
        return Polynomial(self.d, terms)

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            factor = _rational(other)
            return Polynomial(self.d, dict(
                (e, c * factor) for e, c in self.__terms.items()))
        terms = {}
        for e1, c1 in self.__terms.items():
            for e2, c2 in other.__terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return Polynomial(self.d, terms)

    __rmul__ = __mul__

    def __pow__(self, n):
        result = Polynomial.constant(self.d, 1)
        for _ in range(n):
            result = result * self
        return result

    def derivative(self, axis):
        terms = {}
        for exponent, coefficient in self.__terms.items():
            if exponent[axis]:
                e = list(exponent)
                e[axis] -= 1
                terms[tuple(e)] = coefficient * exponent[axis]
        return Polynomial(self.d, terms)

    def divergence_form(self, matrix):
        '''sum over a, b of matrix[a][b] d_a d_b p, with matrix rational.'''
        matrix = _rational_matrix(matrix)
        result = Polynomial(self.d)
        for a in range(self.d):
            first = self.derivative(a)
            for b in range(self.d):
                if matrix[a][b]:
                    result = result + first.derivative(b) * matrix[a][b]
        return result

    def laplacian(self):
        return self.divergence_form(numpy.eye(self.d, dtype = int))

    def homogeneous_part(self, l):
        return Polynomial(self.d, dict(
            (e, c) for e, c in self.__terms.items() if sum(e) == l))

    def scale(self, r):
        '''The polynomial x -> p(r x).'''
        r = _rational(r)
        return Polynomial(self.d, dict(
            (e, c * r ** sum(e)) for e, c in self.__terms.items()))

    def compose_linear(self, matrix):
        '''The polynomial x -> p(M x) for a rational d x d matrix M.'''
        matrix = _rational_matrix(matrix)
        rows = [
            Polynomial(self.d, dict(
                (tuple(int(a == b) for a in range(self.d)), matrix[i][b])
                for b in range(self.d)))
            for i in range(self.d)]
        result = Polynomial(self.d)
        for exponent, coefficient in self.__terms.items():
            term = Polynomial.constant(self.d, coefficient)
            for row, e in zip(rows, exponent):
                term = term * row ** e
            result = result + term
        return result

    def evaluate(self, points):
        points = numpy.asarray(points, dtype = numpy.float64).reshape(
            -1, self.d)
        result = numpy.zeros(len(points))
        for exponent, coefficient in self.__terms.items():
            result += float(coefficient) * numpy.prod(
                points ** numpy.array(exponent), axis = 1)
        return result

    def as_dict(self):
        return {
            'd': self.d,
            'terms': [
                {'exponent': list(e), 'coefficient': str(c)}
                for e, c in self.terms()]}


def homogeneous_part(p, l):
    if l < 0:
        raise ValueError('Degree must be non-negative')
    return p.homogeneous_part(l)


def dim_formula(d, k):
    '''Dimension of the harmonic polynomials of degree at most k in d
    variables: C(d+k-1, k) + C(d+k-2, k-1).'''
    def comb(n, r):
        if r < 0 or n < 0 or r > n:
            return 0
        return math.comb(n, r)
    return comb(d + k - 1, k) + comb(d + k - 2, k - 1)


def euclidean_harmonics(d, degree):
    '''Real solid harmonics of exact degree.'''
    if d == 1:
        if degree > 1:
            return []
        return [Polynomial(1, {(degree,): 1})]
    elif d == 2:
        if degree == 0:
            return [Polynomial.constant(2, 1)]
        # Real and imaginary parts of (x1 + i x2)^degree.
        real, imaginary = {}, {}
        for j in range(degree + 1):
            coefficient = math.comb(degree, j)
            exponent = (degree - j, j)
            sign = (-1) ** (j // 2)
            if j % 2 == 0:
                real[exponent] = sign * coefficient
            else:
                imaginary[exponent] = sign * coefficient
        return [Polynomial(2, real), Polynomial(2, imaginary)]
    else:
        raise ValueError('Only d = 1 and d = 2 are supported')


def _monomials(d, degree):
    if d == 1:
        return [(degree,)]
    return [(degree - j, j) for j in range(degree + 1)]


def _nullspace(rows, columns):
    '''Exact null space of a Fraction matrix; returns a list of basis vectors
    with one free coordinate set to 1 in each.'''
    if not rows:
        return [[Fraction(int(i == j)) for j in range(columns)]
            for i in range(columns)]
    matrix = sympy.Matrix([
        [sympy.Rational(x.numerator, x.denominator) for x in row]
        for row in rows])
    return [[Fraction(int(x.p), int(x.q)) for x in vector]
        for vector in matrix.nullspace()]


def _operator_nullspace(d, degree, s_bar):
    monomials = _monomials(d, degree)
    images = [
        Polynomial(d, {m: 1}).divergence_form(s_bar) for m in monomials]
    targets = _monomials(d, degree - 2) if degree >= 2 else []
    rows = [[image.coefficient(t) for image in images] for t in targets]
    result = []
    for vector in _nullspace(rows, len(monomials)):
        result.append(Polynomial(d, dict(zip(monomials, vector))))
    return result


def _proportional(s_bar, q0):
    '''Returns c with s_bar = c q0 q0^T exactly, or None.'''
    d = len(s_bar)
    product = [[sum(q0[a][c] * q0[b][c] for c in range(d))
        for b in range(d)] for a in range(d)]
    if not product[0][0]:
        return None
    c = s_bar[0][0] / product[0][0]
    if all(s_bar[a][b] == c * product[a][b]
            for a in range(d) for b in range(d)):
        return c
    return None


def _inverse(matrix):
    d = len(matrix)
    if d == 1:
        return [[1 / matrix[0][0]]]
    (a, b), (c, e) = matrix
    det = a * e - b * c
    return [[e / det, -b / det], [-c / det, a / det]]


class HarmonicBasis(object):
    __slots__ = [
        'd', 'k',
        's_bar',            # Rational d x d matrix
        'q0',               # Rational d x d matrix or None
        'polynomials',      # List of Polynomial
        'degrees',          # Exact degree of each polynomial
        'method',           # 'substitution' or 'nullspace'
    ]

    def __init__(self, d, k, s_bar, q0, polynomials, degrees, method):
        self.d = d
        self.k = k
        self.s_bar = s_bar
        self.q0 = q0
        self.polynomials = polynomials
        self.degrees = degrees
        self.method = method

    def __len__(self):
        return len(self.polynomials)

    def __iter__(self):
        return iter(self.polynomials)

    def __repr__(self):
        return 'HarmonicBasis(d=%d, k=%d, %d elements, %s)' % (
            self.d, self.k, len(self), self.method)

    def is_harmonic(self):
        return all(p.divergence_form(self.s_bar).is_zero()
            for p in self.polynomials)

    def evaluate(self, points):
        '''Matrix of basis values, (npoints, len(self)).'''
        return numpy.stack(
            [p.evaluate(points) for p in self.polynomials], axis = 1)

    def combine(self, coefficients):
        result = Polynomial(self.d)
        for c, p in zip(coefficients, self.polynomials):
            result = result + p * c
        return result

    def as_dict(self):
        return {
            'd': self.d, 'k': self.k, 'method': self.method,
            's_bar': [[str(x) for x in row] for row in self.s_bar],
            'elements': [
                dict(p.as_dict(), degree = degree)
                for p, degree in zip(self.polynomials, self.degrees)]}

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys = True, indent = 1)


def abar_harmonic_basis(d, k, s_bar, q0 = None):
    if d not in (1, 2):
        raise ValueError('Only d = 1 and d = 2 are supported')
    if not 0 <= k <= MAX_DEGREE:
        raise ValueError('Degree must lie in [0, %d]' % MAX_DEGREE)
    s_float = numpy.atleast_2d(numpy.asarray(s_bar, dtype = numpy.float64))
    if s_float.shape != (d, d) or not numpy.allclose(s_float, s_float.T) or \
            numpy.linalg.eigvalsh(s_float)[0] <= 0:
        raise ValueError('s_bar must be symmetric positive definite')
    s_rational = _rational_matrix(s_float)
    q0_rational = None if q0 is None else _rational_matrix(q0)

    scale = None
    if q0_rational is not None:
        scale = _proportional(s_rational, q0_rational)
    polynomials, degrees = [], []
    if scale is not None:
        q0_inverse = _inverse(q0_rational)
        for degree in range(k + 1):
            for h in euclidean_harmonics(d, degree):
                polynomials.append(h.compose_linear(q0_inverse))
                degrees.append(degree)
        method = 'substitution'
    else:
        for degree in range(k + 1):
            for p in _operator_nullspace(d, degree, s_rational):
                polynomials.append(p)
                degrees.append(degree)
        method = 'nullspace'

    basis = HarmonicBasis(
        d, k, s_rational, q0_rational, polynomials, degrees, method)
    assert len(basis) == dim_formula(d, k), \
        'Basis has %d elements, expected %d' % (len(basis), dim_formula(d, k))
    assert basis.is_harmonic(), 'Basis is not harmonic'
    return basis


# ----------------------------------------------------------------------------
#   Projections

def _region_domain(region):
    if isinstance(region, Domain):
        return region
    return region.domain()


def _region_radius(region, domain):
    for name in ('radius', 'side'):
        value = getattr(region, name, None)
        if value is not None:
            return float(value)
    return float(max(domain.shape))


def _quadrature(mesh, selected, order):
    '''Gauss-Legendre points of given count per axis on every selected
    element: returns (reference points, physical points, weights).'''
    nodes, weights = numpy.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1)
    weights = 0.5 * weights
    d = mesh.d
    grids = numpy.meshgrid(*[nodes] * d, indexing = 'ij')
    reference = numpy.stack(grids, axis = -1).reshape(-1, d)
    w = numpy.prod(numpy.stack(
        numpy.meshgrid(*[weights] * d, indexing = 'ij'), axis = -1).reshape(
            -1, d), axis = 1) * mesh.h ** d
    corner = mesh.domain.origin - 0.5 + mesh.h * mesh.elements[selected]
    physical = corner[:, None, :] + mesh.h * reference[None]
    return reference, physical, numpy.broadcast_to(
        w, (int(selected.sum()), len(w)))


def project_onto_Abar_k(f, region, k, basis):
    '''Least squares projection of f onto the span of basis in the volume
    normalized L2 product of region.  f is a DiscreteFunction or a callable
    on points.  Returns (polynomial, residual norm).'''
    domain = _region_domain(region)
    if isinstance(f, DiscreteFunction):
        mesh = f.mesh
        selected = mesh.select(domain)
    else:
        mesh = Mesh(domain)
        selected = numpy.ones(mesh.element_count, dtype = bool)
    if not 0 <= k <= basis.k:
        raise ValueError('Degree %d outside the basis' % k)
    elements = [p for p, degree in zip(basis, basis.degrees) if degree <= k]
    order = max(k, 1) + 2
    reference, physical, weights = _quadrature(mesh, selected, order)
    if isinstance(f, DiscreteFunction):
        values = mesh.values_at(f.values, reference)[selected]
    else:
        values = numpy.asarray(f(physical.reshape(-1, mesh.d))).reshape(
            physical.shape[:2])

    radius = _region_radius(region, domain)
    scaled = [p.scale(Fraction(1) / _rational(radius)) for p in elements]
    points = physical.reshape(-1, mesh.d)
    design = numpy.stack([p.evaluate(points) for p in scaled], axis = 1)
    root = numpy.sqrt(weights.reshape(-1))
    volume = weights.sum()

    weighted = root[:, None] * design
    target = root * values.reshape(-1)
    condition = numpy.linalg.cond(weighted)
    if condition > 1e6:
        logger.warning('Basis condition %.2e on %r, re-orthonormalizing',
            condition, region)
        q, r = scipy.linalg.qr(weighted, mode = 'economic')
        diagonal = numpy.abs(numpy.diag(r))
        if diagonal.min() <= 1e-12 * diagonal.max():
            raise ProjectionError(condition)
        coefficients = scipy.linalg.solve_triangular(r, q.T @ target)
    else:
        coefficients = scipy.linalg.lstsq(weighted, target)[0]
    residual = target - weighted @ coefficients
    polynomial = Polynomial(basis.d)
    for c, p in zip(coefficients, scaled):
        polynomial = polynomial + p * Fraction(float(c))
    return polynomial, float(numpy.sqrt(residual @ residual / volume))


# ----------------------------------------------------------------------------
#   Sphere and ball quadrature

SPHERE_POINTS = 64

def _sphere_points(d, radius, count):
    if d == 1:
        return numpy.array([[-radius], [radius]])
    theta = 2 * numpy.pi * numpy.arange(count) / count
    return radius * numpy.stack([numpy.cos(theta), numpy.sin(theta)], axis = 1)


def sphere_inner_product(p, q, radius = 1., count = SPHERE_POINTS):
    '''Mean over the sphere of the given radius of p q, by the trapezoid
    rule, exact for trigonometric degree below count.'''
    points = _sphere_points(p.d, radius, count)
    return float(numpy.mean(p.evaluate(points) * q.evaluate(points)))


def ball_mean_square(p, radius = 1., order = None):
    '''Volume normalized squared L2 norm of p on the ball, exact for
    polynomials of degree below the quadrature order.'''
    degree = max(p.degree, 0)
    order = order or degree + 2
    nodes, weights = numpy.polynomial.legendre.leggauss(order)
    if p.d == 1:
        values = p.evaluate(radius * nodes[:, None])
        return float(0.5 * weights @ values ** 2)
    # Polar coordinates: r dr on [0, radius], trapezoid in the angle.
    r = 0.5 * radius * (nodes + 1)
    w = 0.5 * radius * weights * r
    count = 2 * degree + 2
    theta = 2 * numpy.pi * numpy.arange(count) / count
    x = r[:, None] * numpy.cos(theta)[None]
    y = r[:, None] * numpy.sin(theta)[None]
    values = p.evaluate(numpy.stack([x.ravel(), y.ravel()], axis = 1))
    values = values.reshape(len(r), count) ** 2
    integral = 2 * numpy.pi * w @ values.mean(axis = 1)
    return float(integral / (numpy.pi * radius ** 2))
