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

'''Periodic cellwise constant coefficient fields.

A coefficient field a = s + k assigns to every unit cell of Z^d (cells are
centred on integer points) a symmetric positive definite matrix s and an
antisymmetric matrix k.  Fields are periodic with period L_cells, a power
of 3, so every triadic cube sees a shifted copy of the same environment.

Supports the following generators:

    constant_field(d, s_matrix, k_matrix, L_cells)
    checkerboard(d, L_cells, sigma1, sigma2, p, seed)
    laminate(d, axis, sigma1, sigma2, L_cells = 81)
    poisson_inclusions(d, L_cells, intensity, radius_cells,
        sigma_bg, sigma_inc, seed)
    stream_matrix_field(L_cells, correlation_cells, amplitude, seed)
    lognormal_field(L_cells, correlation_cells, amplitude, seed)

Random generators draw per cell words from a Philox counter based stream
keyed by (seed, stream id) with the cell's flattened index as counter, so a
field is a pure function of its parameters and seed.'''

import logging

import numpy
import scipy.ndimage
import scipy.special
import scipy.stats

__all__ = [
    # Field type and helpers
    'CoefficientField',     # Immutable periodic field of (s, k) per cell
    'FieldError',           # Invalid generator parameters or field data
    'pointwise_A',          # 2d x 2d matrix A(x) from (s, k)
    'cell_uniforms',        # Counter based uniforms keyed by (seed, stream)
    # Generators
    'constant_field',
    'checkerboard',
    'laminate',
    'poisson_inclusions',
    'stream_matrix_field',
    'lognormal_field',
]

logger = logging.getLogger(__name__)

# Recorded in the ensemble tag of every random field.
RNG_ALGORITHM = 'philox4x64'

# Stream identifiers separating the independent random inputs of each
# generator.
STREAM_PHASE = 1
STREAM_POISSON_COUNT = 2
STREAM_POISSON_CENTRES = 3
STREAM_GAUSSIAN = 4

# Rotation by a quarter turn, the antisymmetric unit of d = 2.
ROTATION = numpy.array([[0., 1.], [-1., 0.]])


class FieldError(ValueError):
    '''Raised for invalid generator parameters or malformed cell data.'''

    def __init__(self, message, **detail):
        ValueError.__init__(self, message)
        self.message = message
        self.detail = detail

    def __str__(self):
        if self.detail:
            extra = ', '.join(
                '%s=%r' % item for item in sorted(self.detail.items()))
            return '%s (%s)' % (self.message, extra)
        else:
            return self.message


def is_power_of_3(n):
    if n < 1:
        return False
    while n % 3 == 0:
        n //= 3
    return n == 1


def pointwise_A(s, k):
    '''Assembles the symmetric 2d x 2d matrix

        [ s + k^t s^-1 k    -k^t s^-1 ]
        [ -s^-1 k            s^-1     ]

    for arrays s, k of shape (..., d, d).'''
    s = numpy.asarray(s, dtype = numpy.float64)
    k = numpy.asarray(k, dtype = numpy.float64)
    s_inv = numpy.linalg.inv(s)
    s_inv = 0.5 * (s_inv + numpy.swapaxes(s_inv, -1, -2))
    k_t = numpy.swapaxes(k, -1, -2)
    bottom_left = -s_inv @ k
    top_left = s + k_t @ s_inv @ k
    top_left = 0.5 * (top_left + numpy.swapaxes(top_left, -1, -2))
    top = numpy.concatenate(
        [top_left, numpy.swapaxes(bottom_left, -1, -2)], axis = -1)
    bottom = numpy.concatenate([bottom_left, s_inv], axis = -1)
    return numpy.concatenate([top, bottom], axis = -2)


def cell_uniforms(seed, stream, count):
    '''Returns an array of shape (count, 4) of uniforms in (0, 1).  Row i is
    generated from counter value i of the Philox stream keyed by
    (seed, stream), and so depends only on (seed, stream, i).'''
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (int(stream) << 64)
    bit_generator = numpy.random.Philox(key = key)
    raw = bit_generator.random_raw(4 * int(count)).reshape(int(count), 4)
    mantissa = (raw >> numpy.uint64(11)).astype(numpy.float64)
    return (mantissa + 0.5) * 2.0 ** -53


def _check_cells(s, k):
    d = s.shape[-1]
    if numpy.any(s != numpy.swapaxes(s, -1, -2)):
        raise FieldError('Symmetric part is not exactly symmetric')
    if numpy.any(k + numpy.swapaxes(k, -1, -2) != 0):
        raise FieldError('Antisymmetric part is not exactly antisymmetric')
    eigenvalues = numpy.linalg.eigvalsh(s.reshape(-1, d, d))
    if not numpy.all(eigenvalues > 0):
        raise FieldError('Symmetric part is not positive definite',
            min_eigenvalue = float(eigenvalues.min()))


class CoefficientField(object):
    '''Immutable periodic coefficient field.  Cell z has symmetric part
    s[z mod L] and antisymmetric part k[z mod L].'''

    __slots__ = [
        'd',                # Dimension, 1 or 2
        'L_cells',          # Period in cells, a power of 3
        'seed',             # Seed used by the generator, 0 if none
        'ensemble_tag',     # Generator name, parameters and rng algorithm
        '__s',              # (L,)*d + (d, d) read only array
        '__k',              # (L,)*d + (d, d) read only array
    ]

    def __init__(self, s, k, seed = 0, ensemble_tag = ''):
        s = numpy.array(s, dtype = numpy.float64)
        k = numpy.array(k, dtype = numpy.float64)
        d = s.shape[-1]
        if d not in (1, 2):
            raise FieldError('Only d = 1 and d = 2 are supported', d = d)
        if s.ndim != d + 2 or s.shape[-2:] != (d, d) or k.shape != s.shape:
            raise FieldError('Malformed cell arrays', shape = s.shape)
        L = s.shape[0]
        if set(s.shape[:d]) != {L} or not is_power_of_3(L):
            raise FieldError(
                'Period must be a power of 3 on every axis', shape = s.shape)
        _check_cells(s, k)
        s.setflags(write = False)
        k.setflags(write = False)
        self.d = d
        self.L_cells = L
        self.seed = int(seed)
        self.ensemble_tag = ensemble_tag
        self.__s = s
        self.__k = k

    def __repr__(self):
        return 'CoefficientField(%s, d=%d, L=%d, seed=%d)' % (
            self.ensemble_tag, self.d, self.L_cells, self.seed)

    @property
    def s(self):
        return self.__s

    @property
    def k(self):
        return self.__k

    @property
    def a(self):
        return self.__s + self.__k

    def cell(self, z):
        '''Returns (s, k) for the cell centred on integer point z.'''
        index = tuple(numpy.mod(numpy.asarray(z, dtype = int), self.L_cells))
        return self.__s[index], self.__k[index]

    def window(self, origin, shape):
        '''Returns (s, k) arrays for the box of cells with lowest cell origin
        and the given number of cells per axis, wrapping periodically.'''
        axes = [
            numpy.mod(o + numpy.arange(n), self.L_cells)
            for o, n in zip(origin, shape)]
        index = numpy.ix_(*axes)
        return self.__s[index], self.__k[index]

    def gather(self, cells):
        '''Returns (s, k) for an (n, d) array of integer cell coordinates.'''
        index = tuple(numpy.mod(numpy.asarray(cells, dtype = int),
            self.L_cells).T)
        return self.__s[index], self.__k[index]

    def scaled(self, alpha):
        return CoefficientField(alpha * self.__s, alpha * self.__k,
            self.seed, '%s*%r' % (self.ensemble_tag, alpha))

    def with_antisymmetric(self, k_matrix):
        '''Adds a constant antisymmetric matrix to every cell.'''
        k_matrix = numpy.asarray(k_matrix, dtype = numpy.float64)
        return CoefficientField(self.__s, self.__k + k_matrix,
            self.seed, '%s+k' % self.ensemble_tag)

    def with_contrast(self, contrast):
        '''The same two isotropic phases with the upper one set to contrast
        times the lower one.'''
        phases = self.phase_fractions()
        isotropic = all(
            numpy.array_equal(s, s[0, 0] * numpy.eye(self.d))
            for s, _ in phases)
        if numpy.any(self.__k) or not isotropic or len(phases) > 2:
            raise FieldError(
                'Contrast needs a two phase isotropic symmetric field')
        if not contrast >= 1:
            raise FieldError('Contrast below 1', contrast = contrast)
        if len(phases) == 1:
            if contrast != 1:
                raise FieldError('Field has a single phase',
                    contrast = contrast)
            return self
        lower = phases[0][0][0, 0]
        values = self.__s[..., 0, 0]
        values = numpy.where(values == lower, lower, lower * contrast)
        s, k = _isotropic(self.d, values)
        return CoefficientField(s, k, self.seed,
            '%s^%r' % (self.ensemble_tag, contrast))

    def pointwise_A(self):
        return pointwise_A(self.__s, self.__k)

    def phase_fractions(self):
        '''Returns a list of (s matrix, volume fraction) over the distinct
        symmetric parts, in increasing lexicographic order.'''
        flat = self.__s.reshape(-1, self.d * self.d)
        phases, counts = numpy.unique(flat, axis = 0, return_counts = True)
        total = float(flat.shape[0])
        return [
            (phase.reshape(self.d, self.d), count / total)
            for phase, count in zip(phases, counts)]

    def same_cells(self, other):
        return numpy.array_equal(self.__s, other.s) and \
            numpy.array_equal(self.__k, other.k)


def _tag(name, **params):
    return '%s(%s);rng=%s' % (name,
        ','.join('%s=%r' % item for item in sorted(params.items())),
        RNG_ALGORITHM)


def _check_common(d, L_cells):
    if d not in (1, 2):
        raise FieldError('Only d = 1 and d = 2 are supported', d = d)
    if not is_power_of_3(L_cells):
        raise FieldError('L_cells must be a power of 3', L_cells = L_cells)


def _check_positive(**sigmas):
    for name, sigma in sorted(sigmas.items()):
        if not sigma > 0:
            raise FieldError('Phase coefficients must be positive',
                **{name: sigma})


def _isotropic(d, values):
    '''Returns (s, k) arrays with s = values * I and k = 0.'''
    s = values[..., None, None] * numpy.eye(d)
    return s, numpy.zeros_like(s)


def constant_field(d, s_matrix, k_matrix = None, L_cells = 27):
    _check_common(d, L_cells)
    s_matrix = numpy.array(s_matrix, dtype = numpy.float64).reshape(d, d)
    if k_matrix is None:
        k_matrix = numpy.zeros((d, d))
    k_matrix = numpy.array(k_matrix, dtype = numpy.float64).reshape(d, d)
    shape = (L_cells,) * d + (d, d)
    return CoefficientField(
        numpy.broadcast_to(s_matrix, shape), numpy.broadcast_to(k_matrix, shape),
        0, 'constant(s=%s,k=%s)' % (s_matrix.tolist(), k_matrix.tolist()))


def checkerboard(d, L_cells, sigma1, sigma2, p, seed):
    _check_common(d, L_cells)
    _check_positive(sigma1 = sigma1, sigma2 = sigma2)
    if not 0 <= p <= 1:
        raise FieldError('Probability out of range', p = p)
    uniforms = cell_uniforms(seed, STREAM_PHASE, L_cells ** d)[:, 0]
    values = numpy.where(uniforms < p, float(sigma1), float(sigma2))
    s, k = _isotropic(d, values.reshape((L_cells,) * d))
    return CoefficientField(s, k, seed, _tag('checkerboard',
        d = d, L = L_cells, sigma1 = sigma1, sigma2 = sigma2, p = p))


def laminate(d, axis, sigma1, sigma2, L_cells = 81):
    '''Layers normal to axis alternate sigma1 (even layer index) and sigma2,
    equal in volume over the period.  The period has an odd number of
    layers, so its last layer holds both phases in equal parts, laminated
    finely: harmonic mean of the sigmas normal to the layers, arithmetic
    mean along them.'''
    _check_common(d, L_cells)
    _check_positive(sigma1 = sigma1, sigma2 = sigma2)
    if not 0 <= axis < d:
        raise FieldError('Laminate axis out of range', axis = axis, d = d)
    layer = numpy.arange(L_cells) % 2
    profile = numpy.where(layer == 0, float(sigma1), float(sigma2))
    profile = profile[:, None, None] * numpy.eye(d)
    profile[-1] = 0.5 * (sigma1 + sigma2) * numpy.eye(d)
    profile[-1, axis, axis] = 2. * sigma1 * sigma2 / (sigma1 + sigma2)
    shape = [1] * d + [d, d]
    shape[axis] = L_cells
    s = numpy.broadcast_to(profile.reshape(shape), (L_cells,) * d + (d, d))
    k = numpy.zeros_like(s)
    return CoefficientField(s, k, 0, 'laminate(axis=%d,sigma1=%r,sigma2=%r,'
        'L=%d)' % (axis, sigma1, sigma2, L_cells))


def _periodic_offsets(L_cells, centre):
    '''Signed periodic offsets from centre to every cell centre on an axis.'''
    offset = numpy.arange(L_cells) - centre
    return numpy.mod(offset + 0.5 * L_cells, L_cells) - 0.5 * L_cells


def poisson_inclusions(d, L_cells, intensity, radius_cells,
        sigma_bg, sigma_inc, seed):
    _check_common(d, L_cells)
    _check_positive(sigma_bg = sigma_bg, sigma_inc = sigma_inc)
    if intensity < 0:
        raise FieldError('Negative intensity', intensity = intensity)
    if radius_cells < 1:
        raise FieldError('Inclusion radius below one cell',
            radius_cells = radius_cells)
    if radius_cells >= L_cells / 2:
        raise FieldError('Inclusion would wrap onto itself',
            radius_cells = radius_cells, L_cells = L_cells)

    mean_count = intensity * L_cells ** d
    if mean_count > 0:
        u = cell_uniforms(seed, STREAM_POISSON_COUNT, 1)[0, 0]
        count = int(scipy.stats.poisson.ppf(u, mean_count))
    else:
        count = 0
    centres = L_cells * cell_uniforms(
        seed, STREAM_POISSON_CENTRES, count)[:, :d]

    inside = numpy.zeros((L_cells,) * d, dtype = bool)
    radius2 = float(radius_cells) ** 2
    for centre in centres:
        distance2 = numpy.zeros((L_cells,) * d)
        for axis in range(d):
            shape = [1] * d
            shape[axis] = L_cells
            distance2 = distance2 + \
                _periodic_offsets(L_cells, centre[axis]).reshape(shape) ** 2
        inside |= distance2 < radius2
    logger.debug('poisson_inclusions: %d centres, inclusion fraction %.4f',
        count, inside.mean())

    values = numpy.where(inside, float(sigma_inc), float(sigma_bg))
    s, k = _isotropic(d, values)
    return CoefficientField(s, k, seed, _tag('poisson_inclusions',
        d = d, L = L_cells, intensity = intensity, radius = radius_cells,
        sigma_bg = sigma_bg, sigma_inc = sigma_inc))


def smoothed_gaussian(d, L_cells, correlation_cells, amplitude, seed):
    '''Moving average of independent cell Gaussians over a periodic window
    of half width correlation_cells, centred to zero sample mean and scaled
    to sample standard deviation amplitude.'''
    _check_common(d, L_cells)
    if correlation_cells < 1:
        raise FieldError('Correlation length below one cell',
            correlation_cells = correlation_cells)
    uniforms = cell_uniforms(seed, STREAM_GAUSSIAN, L_cells ** d)[:, 0]
    gaussian = scipy.special.ndtri(uniforms).reshape((L_cells,) * d)
    b = scipy.ndimage.uniform_filter(
        gaussian, size = 2 * int(correlation_cells) + 1, mode = 'wrap')
    b = b - b.mean()
    deviation = b.std()
    if deviation > 0:
        b = b * (amplitude / deviation)
    else:
        b = numpy.zeros_like(b)
    return b


def stream_matrix_field(L_cells, correlation_cells, amplitude, seed):
    '''d = 2 field with s = I and k = b(x) R, R the quarter turn.'''
    b = smoothed_gaussian(2, L_cells, correlation_cells, amplitude, seed)
    s = numpy.broadcast_to(numpy.eye(2), b.shape + (2, 2))
    k = b[..., None, None] * ROTATION
    return CoefficientField(s, k, seed, _tag('stream_matrix',
        L = L_cells, correlation = correlation_cells, amplitude = amplitude))


def lognormal_field(L_cells, correlation_cells, amplitude, seed):
    '''d = 2 field with s = exp(b) I built from the same Gaussian stage as
    stream_matrix_field.'''
    b = smoothed_gaussian(2, L_cells, correlation_cells, amplitude, seed)
    s, k = _isotropic(2, numpy.exp(b))
    return CoefficientField(s, k, seed, _tag('lognormal',
        L = L_cells, correlation = correlation_cells, amplitude = amplitude))
