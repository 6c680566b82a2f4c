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

'''Triadic cubes, adapted cubes and balls, and cell sets.

Cells are unit cubes centred on the points of Z^d.  Every region used by the
solvers is rasterized to a Domain: a box of cells given by its lowest cell
and its shape, together with a mask of active cells.

The adapted geometry of a symmetric positive definite matrix s_bar is the
matrix q0, entrywise a multiple of 3^-k0, approximating
|s_bar^-1|^(1/2) s_bar^(1/2).  Adapted cubes are images q0(z + cube) and
adapted balls are sets |q0^-1 (x - c)| < r.  Membership of cell centres in
adapted cubes is decided in exact integer arithmetic, using the integer
matrix Q = 3^k0 q0, so that the subcubes of one level partition the cells of
their parent exactly.'''

import csv
import itertools
import logging

import numpy

__all__ = [
    'Domain',               # Box of cells with an active mask
    'TriadicCube',          # Axis aligned cube z + (-3^n/2, 3^n/2)^d
    'AdaptedGeometry',      # q0 and its lattice
    'AdaptedCube',          # q0 image of a triadic cube
    'AdaptedBall',          # |q0^-1 (x - c)| < r
    'GeometryError',
    'make_adapted_geometry',
    'partition_adapted_cube',
    'enumerate_subcubes',
]

logger = logging.getLogger(__name__)

DEFAULT_K0 = 4
# Largest rounding exponent tried when k0 is auto-incremented.
MAX_K0 = 12


class GeometryError(ValueError):
    pass


def _box_slices(lo, shape):
    return tuple(slice(l, l + n) for l, n in zip(lo, shape))


class Domain(object):
    '''A set of unit cells: the box of cells origin + [0, shape) and the
    boolean mask of active cells within it.'''

    __slots__ = [
        'origin',           # Integer coordinates of the lowest box cell
        'mask',             # Boolean array over the box, True if active
    ]

    def __init__(self, origin, mask):
        self.origin = numpy.array(origin, dtype = int).reshape(-1)
        self.mask = numpy.array(mask, dtype = bool)
        if self.mask.ndim != self.origin.size:
            raise GeometryError('Mask and origin disagree on dimension')
        self.mask.setflags(write = False)

    @classmethod
    def box(cls, origin, shape):
        return cls(origin, numpy.ones(tuple(shape), dtype = bool))

    def __repr__(self):
        return 'Domain(origin=%s, shape=%s, volume=%d)' % (
            self.origin.tolist(), self.shape, self.volume)

    @property
    def d(self):
        return self.origin.size

    @property
    def shape(self):
        return self.mask.shape

    @property
    def volume(self):
        '''Number of active cells.'''
        return int(self.mask.sum())

    @property
    def is_box(self):
        return bool(self.mask.all())

    def cells(self):
        '''Integer coordinates of active cells, (n, d), row major order.'''
        return numpy.argwhere(self.mask) + self.origin

    def box_cells(self):
        '''Integer coordinates of every cell of the box, shape + (d,).'''
        grids = numpy.meshgrid(*[
            o + numpy.arange(n) for o, n in zip(self.origin, self.shape)],
            indexing = 'ij')
        return numpy.stack(grids, axis = -1)

    def submask(self, region):
        '''Boolean mask over this box of the cells of region, which must lie
        within this box.'''
        lo = region.origin - self.origin
        if numpy.any(lo < 0) or numpy.any(lo + region.shape > self.shape):
            raise GeometryError('Region is not contained in domain')
        result = numpy.zeros(self.shape, dtype = bool)
        result[_box_slices(lo, region.shape)] = region.mask
        return result & self.mask

    def contains(self, region):
        return bool(numpy.all(self.submask(region) == self._in_box(region)))

    def _in_box(self, region):
        lo = region.origin - self.origin
        result = numpy.zeros(self.shape, dtype = bool)
        result[_box_slices(lo, region.shape)] = region.mask
        return result

    def min_side(self):
        '''Smallest extent, in cells, of the active set along any axis.'''
        cells = numpy.argwhere(self.mask)
        if cells.size == 0:
            return 0
        return int((cells.max(axis = 0) - cells.min(axis = 0) + 1).min())


class TriadicCube(object):
    __slots__ = [
        'level',            # n: side length 3^n
        'centre',           # Integer point of 3^n Z^d
    ]

    def __init__(self, level, centre):
        self.level = int(level)
        self.centre = numpy.array(centre, dtype = int).reshape(-1)
        if self.level < 0:
            raise GeometryError('Negative cube level')
        if numpy.any(self.centre % 3 ** self.level):
            raise GeometryError('Cube centre not on the triadic lattice',
                self.centre.tolist(), self.level)

    def __repr__(self):
        return 'TriadicCube(%d, %s)' % (self.level, self.centre.tolist())

    def __eq__(self, other):
        return isinstance(other, TriadicCube) and \
            self.level == other.level and \
            numpy.array_equal(self.centre, other.centre)

    def __hash__(self):
        return hash((self.level, tuple(self.centre)))

    @property
    def d(self):
        return self.centre.size

    @property
    def side(self):
        return 3 ** self.level

    @property
    def volume(self):
        return self.side ** self.d

    def domain(self):
        half = (self.side - 1) // 2
        return Domain.box(self.centre - half, (self.side,) * self.d)

    def contains_points(self, points):
        points = numpy.asarray(points, dtype = numpy.float64)
        return numpy.all(
            numpy.abs(points - self.centre) < 0.5 * self.side, axis = -1)

    def children(self):
        if self.level == 0:
            raise GeometryError('Unit cells have no children')
        step = 3 ** (self.level - 1)
        return [
            TriadicCube(self.level - 1, self.centre + step * numpy.array(w))
            for w in itertools.product((-1, 0, 1), repeat = self.d)]


def _integer_matrix_sqrt(s_bar, k0):
    '''Returns the integer matrix ceil(3^k0 |s^-1|^(1/2) s^(1/2)); entries
    within relative 1e-8 of an integer are taken as that integer.'''
    eigenvalues, vectors = numpy.linalg.eigh(s_bar)
    root = (vectors * numpy.sqrt(eigenvalues)) @ vectors.T
    root = 0.5 * (root + root.T)
    raw = 3 ** k0 * root / numpy.sqrt(eigenvalues.min())
    nearest = numpy.rint(raw)
    close = numpy.abs(raw - nearest) <= 1e-8 * numpy.maximum(1, numpy.abs(raw))
    raw = numpy.where(close, nearest, raw)
    return numpy.ceil(raw).astype(numpy.int64)


def _adjugate(Q):
    if Q.shape == (1, 1):
        return numpy.array([[1]], dtype = numpy.int64)
    a, b = Q[0]
    c, d = Q[1]
    return numpy.array([[d, -b], [-c, a]], dtype = numpy.int64)


def _determinant(Q):
    if Q.shape == (1, 1):
        return int(Q[0, 0])
    return int(Q[0, 0] * Q[1, 1] - Q[0, 1] * Q[1, 0])


class AdaptedGeometry(object):
    '''The matrix q0 = Q / 3^k0 together with the spectral data of s_bar.'''

    __slots__ = [
        'd',
        'k0',               # Rounding exponent
        'Q',                # Integer matrix 3^k0 q0
        'q0',               # Float copy of Q / 3^k0
        'q0_inv',
        's_bar',
        'lambda_bar',       # Smallest eigenvalue of s_bar
        'Lambda_bar',       # Spectral norm of s_bar
        'Pi_sbar',          # Lambda_bar / lambda_bar
        '__det',            # det Q, positive
        '__adj',            # Integer adjugate of Q
    ]

    def __init__(self, s_bar, k0, Q):
        self.d = Q.shape[0]
        self.k0 = int(k0)
        self.Q = Q
        self.Q.setflags(write = False)
        self.q0 = Q / float(3 ** k0)
        self.q0_inv = numpy.linalg.inv(self.q0)
        self.s_bar = numpy.array(s_bar, dtype = numpy.float64)
        eigenvalues = numpy.linalg.eigvalsh(self.s_bar)
        self.lambda_bar = float(eigenvalues.min())
        self.Lambda_bar = float(eigenvalues.max())
        self.Pi_sbar = self.Lambda_bar / self.lambda_bar
        self.__det = _determinant(Q)
        self.__adj = _adjugate(Q)

    def __repr__(self):
        return 'AdaptedGeometry(q0=%s, k0=%d)' % (self.q0.tolist(), self.k0)

    def reference_numerators(self, points):
        '''For integer points x returns the integer vectors det(Q) q0^-1 x.'''
        points = numpy.asarray(points, dtype = numpy.int64)
        return 3 ** self.k0 * (points @ self.__adj.T)

    def subcube_index(self, points, n):
        '''For integer points x returns the lattice index w of the level n
        subcube w + [-1/2, 1/2)^d, in reference coordinates, holding x.'''
        D = self.__det
        numerators = self.reference_numerators(points)
        scale = 3 ** n * D
        return (2 * numerators + scale) // (2 * scale)

    def to_reference(self, points):
        return numpy.asarray(points, dtype = numpy.float64) @ self.q0_inv.T

    def cube(self, n, index = None):
        if index is None:
            index = numpy.zeros(self.d, dtype = int)
        return AdaptedCube(self, n, index)

    def ball(self, radius, centre = None):
        if centre is None:
            centre = numpy.zeros(self.d)
        return AdaptedBall(self, radius, centre)

    def lattice_in_reference(self):
        '''3^k0 q0(e_i): columns of Q, integral by construction.'''
        return self.Q.copy()

    def is_identity(self):
        return bool(numpy.array_equal(self.Q, 3 ** self.k0 * numpy.eye(
            self.d, dtype = numpy.int64)))


class AdaptedCube(object):
    '''z + q0((-3^n/2, 3^n/2)^d) with z = 3^n q0 w.  Cells belong to the cube
    when their centre does, faces being resolved half open in reference
    coordinates.'''

    __slots__ = [
        'geometry',
        'level',
        'index',            # Integer lattice index w
        '__domain',         # Cached rasterization
    ]

    def __init__(self, geometry, level, index):
        self.geometry = geometry
        self.level = int(level)
        self.index = numpy.array(index, dtype = int).reshape(-1)
        self.__domain = None

    def __repr__(self):
        return 'AdaptedCube(%d, %s)' % (self.level, self.index.tolist())

    @property
    def d(self):
        return self.geometry.d

    @property
    def centre(self):
        return 3 ** self.level * (self.geometry.q0 @ self.index)

    @property
    def side(self):
        return 3 ** self.level

    def contains_points(self, points):
        reference = self.geometry.to_reference(
            numpy.asarray(points, dtype = numpy.float64) - self.centre)
        return numpy.all(numpy.abs(reference) < 0.5 * self.side, axis = -1)

    def domain(self):
        if self.__domain is None:
            q0 = self.geometry.q0
            corners = numpy.array([
                q0 @ (self.side * (self.index + numpy.array(c)))
                for c in itertools.product((-0.5, 0.5), repeat = self.d)])
            lo = numpy.floor(corners.min(axis = 0)).astype(int) - 1
            hi = numpy.ceil(corners.max(axis = 0)).astype(int) + 1
            box = Domain.box(lo, hi - lo + 1)
            cells = box.box_cells().reshape(-1, self.d)
            index = self.geometry.subcube_index(cells, self.level)
            mask = numpy.all(index == self.index, axis = 1).reshape(box.shape)
            self.__domain = _trim(Domain(lo, mask))
        return self.__domain

    @property
    def volume(self):
        return self.domain().volume

    def subcubes(self, n):
        '''The 3^((level - n) d) adapted subcubes of level n, lexicographic
        in their lattice index.'''
        if n > self.level:
            raise GeometryError('Subcube level above parent level')
        ratio = 3 ** (self.level - n)
        half = (ratio - 1) // 2
        return [
            AdaptedCube(self.geometry, n,
                ratio * self.index + numpy.array(offset))
            for offset in itertools.product(
                range(-half, half + 1), repeat = self.d)]


class AdaptedBall(object):
    __slots__ = [
        'geometry',
        'radius',
        'centre',
        '__domain',
    ]

    def __init__(self, geometry, radius, centre):
        self.geometry = geometry
        self.radius = float(radius)
        self.centre = numpy.array(centre, dtype = numpy.float64).reshape(-1)
        self.__domain = None

    def __repr__(self):
        return 'AdaptedBall(%g, %s)' % (self.radius, self.centre.tolist())

    @property
    def d(self):
        return self.geometry.d

    def contains_points(self, points):
        reference = self.geometry.to_reference(
            numpy.asarray(points, dtype = numpy.float64) - self.centre)
        return numpy.sqrt(numpy.sum(reference ** 2, axis = -1)) < self.radius

    def domain(self):
        if self.__domain is None:
            extent = self.radius * numpy.linalg.norm(self.geometry.q0, 2)
            lo = numpy.floor(self.centre - extent).astype(int) - 1
            hi = numpy.ceil(self.centre + extent).astype(int) + 1
            box = Domain.box(lo, hi - lo + 1)
            cells = box.box_cells()
            mask = self.contains_points(cells)
            self.__domain = _trim(Domain(lo, mask))
        return self.__domain

    @property
    def volume(self):
        return self.domain().volume


def _trim(domain):
    '''Shrinks the box of a domain to the bounding box of its cells.'''
    cells = numpy.argwhere(domain.mask)
    if cells.size == 0:
        raise GeometryError('Region contains no whole cells')
    lo = cells.min(axis = 0)
    hi = cells.max(axis = 0) + 1
    return Domain(domain.origin + lo, domain.mask[_box_slices(lo, hi - lo)])


def make_adapted_geometry(s_bar, k0 = DEFAULT_K0, auto_increment = True):
    s_bar = numpy.array(s_bar, dtype = numpy.float64)
    if s_bar.ndim != 2 or s_bar.shape[0] != s_bar.shape[1] or \
            s_bar.shape[0] not in (1, 2):
        raise GeometryError('s_bar must be a 1x1 or 2x2 matrix')
    if not numpy.allclose(s_bar, s_bar.T, rtol = 1e-12, atol = 0):
        raise GeometryError('s_bar is not symmetric')
    s_bar = 0.5 * (s_bar + s_bar.T)
    if numpy.linalg.eigvalsh(s_bar).min() <= 0:
        raise GeometryError('s_bar is not positive definite')

    while True:
        Q = _integer_matrix_sqrt(s_bar, k0)
        if numpy.array_equal(Q, Q.T) and \
                numpy.linalg.eigvalsh(Q.astype(numpy.float64)).min() > 0:
            return AdaptedGeometry(s_bar, k0, Q)
        if not auto_increment or k0 >= MAX_K0:
            raise GeometryError(
                'Rounding destroys positive definiteness at k0=%d' % k0)
        logger.info('make_adapted_geometry: increasing k0 to %d', k0 + 1)
        k0 += 1


def enumerate_subcubes(geometry, m, n):
    '''All cubes z + diamond_n with z in 3^n L0 inside diamond_m.'''
    if n > m:
        raise GeometryError('Subcube level above parent level')
    return geometry.cube(m).subcubes(n)


class Partition(object):
    '''Result of partition_adapted_cube.'''

    __slots__ = [
        'level',            # n of the partitioned cube
        'cubes',            # List of (j, TriadicCube)
        'volumes',          # Dictionary j -> |V_j| in cells
        'remainder',        # Cells not covered above j_min
        'total',            # |diamond_n| in cells
        'constants',        # Dictionary j -> measured C for j < n
    ]

    def __init__(self, level, cubes, volumes, remainder, total, constants):
        self.level = level
        self.cubes = cubes
        self.volumes = volumes
        self.remainder = remainder
        self.total = total
        self.constants = constants

    @property
    def constant(self):
        return max(self.constants.values()) if self.constants else 0.

    def write_csv(self, output):
        writer = csv.writer(output, lineterminator = '\r\n')
        d = self.cubes[0][1].d if self.cubes else 0
        writer.writerow(['level'] + ['centre_%d' % i for i in range(d)] +
            ['count'])
        for level, cube in self.cubes:
            writer.writerow([level] + cube.centre.tolist() + [cube.volume])


def _block_sums(mask, side):
    '''Sums of mask over every side^d block, indexed by lowest corner.'''
    total = mask.astype(numpy.int64)
    for axis in range(mask.ndim):
        total = numpy.cumsum(total, axis = axis)
        total = numpy.concatenate([
            numpy.zeros_like(numpy.take(total, [0], axis = axis)), total],
            axis = axis)
        upper = numpy.take(
            total, numpy.arange(side, total.shape[axis]), axis = axis)
        lower = numpy.take(
            total, numpy.arange(0, total.shape[axis] - side), axis = axis)
        total = upper - lower
    return total


def partition_adapted_cube(geometry, n, j_min = 0):
    '''Greedy cover of diamond_n by triadic cubes: all level n triadic cubes
    inside it, then all level n - 1 cubes inside what remains, down to
    level j_min.'''
    if j_min > n or j_min < 0:
        raise GeometryError('Need 0 <= j_min <= n')
    domain = geometry.cube(n).domain()
    remaining = numpy.array(domain.mask)
    total = domain.volume
    cubes = []
    volumes = {}
    for j in range(n, j_min - 1, -1):
        side = 3 ** j
        half = (side - 1) // 2
        volumes[j] = 0
        if any(side > s for s in remaining.shape):
            continue
        sums = _block_sums(remaining, side)
        # Block corner c holds a triadic cube when origin + c + half is a
        # multiple of side on every axis.
        first = [(-(o + half)) % side for o in domain.origin]
        index = numpy.ix_(*[
            numpy.arange(f, sums.shape[i], side)
            for i, f in enumerate(first)])
        full = sums[index] == side ** domain.d
        corners = numpy.argwhere(full) * side + numpy.array(first)
        for corner in corners:
            remaining[_box_slices(corner, (side,) * domain.d)] = False
            centre = domain.origin + corner + half
            cubes.append((j, TriadicCube(j, centre)))
        volumes[j] = len(corners) * side ** domain.d

    remainder = int(remaining.sum())
    constants = {}
    root_pi = numpy.sqrt(geometry.Pi_sbar)
    for j in range(j_min, n):
        constants[j] = volumes[j] / (root_pi * 3.0 ** (j - n) * total)
    return Partition(n, cubes, volumes, remainder, total, constants)
