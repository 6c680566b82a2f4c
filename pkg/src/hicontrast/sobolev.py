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

'''Volume normalized norms.

All norms divide by the volume of the region, so that the norm of the
constant 1 is 1 on every region.

    l2_mean_norm(f, region)
    energy_seminorm(f, field, region)
    neg_sobolev_seminorm(f, region, s, config = None)
    pos_sobolev_norm(v, region, s, config = None)

The negative seminorm is spectral: f is expanded in the eigenvectors of the
zero flux discrete Laplacian on the cells of the region, orthonormal for the
volume normalized inner product, and mode k is weighted by
(|U|^(-2s/d) + mu_k^s)^-1.  On boxes the eigenvectors are separable cosines
and the expansion is a type II discrete cosine transform; other cell sets
use a cached dense eigendecomposition.

A NormConfig bundles the order s, the spectral cutoff K_max and the cell
spacing; explicit keyword arguments override its fields.'''

import logging
import threading

import numpy
import scipy.fft
import scipy.linalg

from .fem import DiscreteFunction

__all__ = [
    'NormConfig',           # Exponent, spectral cutoff and cell spacing
    'l2_mean_norm',
    'energy_seminorm',
    'neg_sobolev_seminorm',
    'pos_sobolev_norm',
    'spectral_expansion',   # (coefficients, eigenvalues) of cell data
    'neumann_mode',         # Volume normalized eigenvector
]

logger = logging.getLogger(__name__)


class NormConfig(object):
    __slots__ = [
        's_exponent',       # Order s of the negative seminorm, in (0, 1)
        'K_max',            # Number of modes kept, None for all
        'spacing',          # Physical side of one cell
    ]

    def __init__(self, s_exponent = 0.4, K_max = None, spacing = 1.):
        if not 0 < s_exponent < 1:
            raise ValueError('s_exponent must lie in (0, 1)')
        if K_max is not None and K_max < 1:
            raise ValueError('K_max must be at least 1')
        if spacing <= 0:
            raise ValueError('spacing must be positive')
        self.s_exponent = float(s_exponent)
        self.K_max = K_max
        self.spacing = float(spacing)


def _as_domain(region):
    if hasattr(region, 'mask'):
        return region
    return region.domain()


def _cell_data(f, domain):
    '''Cell values of f over the domain box, leading axes spatial.'''
    if isinstance(f, DiscreteFunction):
        if f.domain.shape != domain.shape or \
                not numpy.array_equal(f.domain.origin, domain.origin):
            return _restrict(f.cell_values(), f.domain, domain)
        return f.cell_values()
    return numpy.asarray(f, dtype = numpy.float64)


def _restrict(values, source, target):
    offset = numpy.asarray(target.origin) - numpy.asarray(source.origin)
    if numpy.any(offset < 0) or numpy.any(
            offset + target.shape > numpy.array(source.shape)):
        raise ValueError('Region is not contained in the function domain')
    index = tuple(slice(o, o + n) for o, n in zip(offset, target.shape))
    return values[index]


# ----------------------------------------------------------------------------
#   Spectral expansion

_eigen_cache = {}
_eigen_lock = threading.Lock()

def _graph_eigenpairs(mask):
    '''Eigenpairs of the zero flux Laplacian on the active cells of mask, for
    unit spacing, with eigenvectors orthonormal in the Euclidean sense.'''
    key = (mask.shape, mask.tobytes())
    with _eigen_lock:
        cached = _eigen_cache.get(key)
    if cached is not None:
        return cached

    index = -numpy.ones(mask.shape, dtype = int)
    cells = numpy.argwhere(mask)
    index[tuple(cells.T)] = numpy.arange(len(cells))
    laplacian = numpy.zeros((len(cells), len(cells)))
    for axis in range(mask.ndim):
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        a, b = index[tuple(lo)], index[tuple(hi)]
        linked = (a >= 0) & (b >= 0)
        a, b = a[linked], b[linked]
        laplacian[a, b] -= 1
        laplacian[b, a] -= 1
        numpy.add.at(laplacian, (a, a), 1)
        numpy.add.at(laplacian, (b, b), 1)
    eigenvalues, eigenvectors = scipy.linalg.eigh(laplacian)
    # Rounding noise on the kernel would survive as mu^s, so snap it to zero.
    cutoff = 1e-12 * max(float(eigenvalues.max()), 1.)
    eigenvalues = numpy.where(eigenvalues > cutoff, eigenvalues, 0.)
    result = (cells, eigenvalues, eigenvectors)
    with _eigen_lock:
        _eigen_cache.setdefault(key, result)
    return result


def spectral_expansion(f, region, spacing = 1.):
    '''Returns (coefficients, mu) with coefficients[k] the volume normalized
    inner product of f with the k-th Neumann eigenvector and mu[k] its
    eigenvalue.  Vector valued f keeps its trailing component axis.'''
    domain = _as_domain(region)
    values = _cell_data(f, domain)
    d = domain.d
    count = int(domain.mask.sum())
    trailing = values.shape[d:]
    h2 = spacing ** 2

    if domain.is_box:
        axes = tuple(range(d))
        coefficients = scipy.fft.dctn(values, type = 2, norm = 'ortho',
            axes = axes) / numpy.sqrt(count)
        mu = numpy.zeros(domain.shape)
        for axis, n in enumerate(domain.shape):
            shape = [1] * d
            shape[axis] = n
            mu = mu + (4. / h2) * numpy.sin(
                numpy.pi * numpy.arange(n) / (2 * n)).reshape(shape) ** 2
        return coefficients.reshape((-1,) + trailing), mu.reshape(-1)
    else:
        cells, eigenvalues, eigenvectors = _graph_eigenpairs(domain.mask)
        flat = values[tuple(cells.T)].reshape(count, -1)
        coefficients = (eigenvectors.T @ flat) / numpy.sqrt(count)
        return coefficients.reshape((-1,) + trailing), eigenvalues / h2


def neumann_mode(region, k, spacing = 1.):
    '''Cell values of the k-th eigenvector in the ordering used by
    spectral_expansion, with unit volume normalized norm.  Returns
    (values over the domain box, eigenvalue).'''
    domain = _as_domain(region)
    count = int(domain.mask.sum())
    if domain.is_box:
        multi = numpy.unravel_index(k, domain.shape)
        values = numpy.ones(domain.shape)
        mu = 0.
        for axis, (n, j) in enumerate(zip(domain.shape, multi)):
            shape = [1] * domain.d
            shape[axis] = n
            x = numpy.arange(n) + 0.5
            factor = numpy.cos(numpy.pi * j * x / n)
            factor = factor / numpy.sqrt(numpy.mean(factor ** 2))
            values = values * factor.reshape(shape)
            mu += 4. / spacing ** 2 * numpy.sin(numpy.pi * j / (2 * n)) ** 2
        return values, mu
    else:
        cells, eigenvalues, eigenvectors = _graph_eigenpairs(domain.mask)
        values = numpy.zeros(domain.shape)
        values[tuple(cells.T)] = eigenvectors[:, k] * numpy.sqrt(count)
        return values, eigenvalues[k] / spacing ** 2


def _weights(mu, volume, d, s):
    with numpy.errstate(divide = 'ignore'):
        return 1. / (volume ** (-2. * s / d) + mu ** s)


def _truncate(coefficients, mu, K_max):
    if K_max is None or K_max >= len(mu):
        return coefficients, mu
    logger.warning('Spectrum truncated to %d of %d modes; '
        'the seminorm is a lower bound', K_max, len(mu))
    keep = numpy.argsort(mu, kind = 'stable')[:K_max]
    return coefficients[keep], mu[keep]


def _apply_weight(f, domain, weight):
    values = _cell_data(f, domain)
    if weight is None:
        return values
    return values @ numpy.asarray(weight, dtype = numpy.float64).T


def _norm_config(s, K_max, spacing, config):
    # Explicit arguments win over the fields of config.
    config = config or NormConfig()
    return NormConfig(
        config.s_exponent if s is None else s,
        config.K_max if K_max is None else K_max,
        config.spacing if spacing is None else spacing)


def neg_sobolev_seminorm(f, region, s = None, K_max = None, spacing = None,
        weight = None, config = None):
    '''Spectral negative seminorm of order s of cell data f.  Vector valued
    f (trailing component axis) is multiplied by the matrix weight first and
    its components are combined in the Euclidean norm.  A NormConfig may
    supply s, K_max and spacing; explicit arguments override it.'''
    config = _norm_config(s, K_max, spacing, config)
    domain = _as_domain(region)
    values = _apply_weight(f, domain, weight)
    coefficients, mu = spectral_expansion(values, domain, config.spacing)
    coefficients, mu = _truncate(coefficients, mu, config.K_max)
    volume = domain.volume * config.spacing ** domain.d
    rho = _weights(mu, volume, domain.d, config.s_exponent)
    squares = numpy.abs(coefficients) ** 2
    if squares.ndim > 1:
        squares = squares.reshape(len(mu), -1).sum(axis = 1)
    return float(numpy.sqrt(numpy.sum(rho * squares)))


def pos_sobolev_norm(v, region, s = None, spacing = None, weight = None,
        config = None):
    '''Spectral norm of order s dual to neg_sobolev_seminorm.  The whole
    spectrum is always used, whatever K_max config holds.'''
    config = _norm_config(s, None, spacing, config)
    s = config.s_exponent
    domain = _as_domain(region)
    values = _apply_weight(v, domain, weight)
    coefficients, mu = spectral_expansion(values, domain, config.spacing)
    volume = domain.volume * config.spacing ** domain.d
    inverse = volume ** (-2. * s / domain.d) + mu ** s
    squares = numpy.abs(coefficients) ** 2
    if squares.ndim > 1:
        squares = squares.reshape(len(mu), -1).sum(axis = 1)
    return float(numpy.sqrt(numpy.sum(inverse * squares)))


# ----------------------------------------------------------------------------
#   Norms of finite element functions

def _region_elements(f, region):
    mesh = f.mesh
    if region is None:
        return mesh, numpy.ones(mesh.element_count, dtype = bool)
    return mesh, mesh.select(_as_domain(region))


def l2_mean_norm(f, region = None):
    '''Volume normalized L2 norm.  DiscreteFunctions are integrated exactly
    by Gauss quadrature; arrays are read as cell values.'''
    if isinstance(f, DiscreteFunction):
        mesh, selected = _region_elements(f, region)
        values = f.gauss_values()[selected]
        volume = selected.sum() * mesh.h ** mesh.d
        integral = numpy.einsum('q,cq->', mesh.weights, values ** 2)
        return float(numpy.sqrt(integral / volume))
    values = numpy.asarray(f, dtype = numpy.float64)
    if region is not None:
        domain = _as_domain(region)
        values = values[domain.mask]
    return float(numpy.sqrt(numpy.mean(values ** 2)))


def energy_seminorm(f, field, region = None):
    '''Volume normalized norm of s^(1/2) grad f.'''
    mesh, selected = _region_elements(f, region)
    gradients = f.gauss_gradients()[selected]
    s, _ = mesh.element_coefficients(field)
    density = numpy.einsum('cqa,cab,cqb->cq', gradients, s[selected], gradients)
    volume = selected.sum() * mesh.h ** mesh.d
    return float(numpy.sqrt(
        numpy.einsum('q,cq->', mesh.weights, density) / volume))
