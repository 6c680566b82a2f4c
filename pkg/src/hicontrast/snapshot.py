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

'''Binary snapshot formats.

CGF1 coefficient field snapshots: magic "CGF1", then little endian u32 d,
u32 L_cells, u64 seed, u32 tag length and UTF-8 tag, then for each cell in
row major order the d*d float64 entries of s followed by those of k.

SOL1 discrete function dumps: magic "SOL1", then little endian u32 d,
u32 refine, d x i32 cell origin, d x u32 cells per axis, u32 tag length and
UTF-8 tag, one u8 per cell of the box marking active cells, then the nodal
float64 values in row major order.'''

import ctypes
import hashlib

import numpy

from .fieldgen import CoefficientField, FieldError

__all__ = [
    'write_field',      # Write CGF1 snapshot
    'read_field',       # Read CGF1 snapshot
    'field_bytes',      # CGF1 encoding of a field
    'write_solution',   # Write SOL1 dump of a DiscreteFunction
    'read_solution',    # Read SOL1 dump
    'content_hash',     # SHA-256 of a file's contents
    'SnapshotError',
]

FIELD_MAGIC = b'CGF1'
SOLUTION_MAGIC = b'SOL1'


class SnapshotError(ValueError):
    def __init__(self, path, reason):
        ValueError.__init__(self, path, reason)
        self.path = path
        self.reason = reason

    def __str__(self):
        return '%s: %s' % (self.path, self.reason)


class field_header(ctypes.LittleEndianStructure):
    _pack_ = 1
    _fields_ = [
        ('d',       ctypes.c_uint32),
        ('L_cells', ctypes.c_uint32),
        ('seed',    ctypes.c_uint64)]

class tag_length(ctypes.LittleEndianStructure):
    _pack_ = 1
    _fields_ = [('length', ctypes.c_uint32)]

class solution_header(ctypes.LittleEndianStructure):
    _pack_ = 1
    _fields_ = [
        ('d',       ctypes.c_uint32),
        ('refine',  ctypes.c_uint32)]


class _Reader(object):
    '''Sequential reader over a bytes buffer reporting truncation.'''

    def __init__(self, path, data):
        self.path = path
        self.data = data
        self.offset = 0

    def take(self, count):
        if self.offset + count > len(self.data):
            raise SnapshotError(self.path, 'truncated file')
        result = self.data[self.offset:self.offset + count]
        self.offset += count
        return result

    def structure(self, structure_type):
        return structure_type.from_buffer_copy(
            self.take(ctypes.sizeof(structure_type)))

    def array(self, dtype, count):
        dtype = numpy.dtype(dtype)
        return numpy.frombuffer(self.take(dtype.itemsize * count), dtype)

    def tag(self):
        length = self.structure(tag_length).length
        return self.take(length).decode('UTF-8')

    def finish(self):
        if self.offset != len(self.data):
            raise SnapshotError(self.path, 'trailing data')


def _tag_bytes(tag):
    encoded = tag.encode('UTF-8')
    return bytes(tag_length(len(encoded))) + encoded


def field_bytes(field):
    header = field_header(field.d, field.L_cells, field.seed)
    d = field.d
    cells = numpy.concatenate([
        field.s.reshape(-1, d * d), field.k.reshape(-1, d * d)], axis = 1)
    return b''.join([
        FIELD_MAGIC, bytes(header), _tag_bytes(field.ensemble_tag),
        numpy.ascontiguousarray(cells, dtype = '<f8').tobytes()])


def write_field(path, field):
    with open(path, 'wb') as output:
        output.write(field_bytes(field))


def read_field(path):
    with open(path, 'rb') as source:
        reader = _Reader(path, source.read())
    if reader.take(4) != FIELD_MAGIC:
        raise SnapshotError(path, 'not a CGF1 snapshot')
    header = reader.structure(field_header)
    tag = reader.tag()
    d, L = header.d, header.L_cells
    if d not in (1, 2) or L < 1:
        raise SnapshotError(path, 'bad header d=%d L=%d' % (d, L))
    cells = reader.array('<f8', L ** d * 2 * d * d)
    reader.finish()
    cells = cells.astype(numpy.float64).reshape((L,) * d + (2, d, d))
    try:
        return CoefficientField(
            cells[..., 0, :, :], cells[..., 1, :, :], header.seed, tag)
    except FieldError as error:
        raise SnapshotError(path, str(error)) from error


def write_solution(path, function, tag = ''):
    domain = function.domain
    d = domain.d
    header = solution_header(d, function.refine)
    with open(path, 'wb') as output:
        output.write(SOLUTION_MAGIC)
        output.write(bytes(header))
        output.write(numpy.asarray(domain.origin, dtype = '<i4').tobytes())
        output.write(numpy.asarray(domain.shape, dtype = '<u4').tobytes())
        output.write(_tag_bytes(tag))
        output.write(domain.mask.astype(numpy.uint8).tobytes())
        output.write(numpy.ascontiguousarray(
            function.values, dtype = '<f8').tobytes())


def read_solution(path):
    '''Returns (DiscreteFunction, tag).'''
    from .fem import DiscreteFunction
    from .geometry import Domain

    with open(path, 'rb') as source:
        reader = _Reader(path, source.read())
    if reader.take(4) != SOLUTION_MAGIC:
        raise SnapshotError(path, 'not a SOL1 dump')
    header = reader.structure(solution_header)
    d, refine = header.d, header.refine
    origin = reader.array('<i4', d).astype(int)
    shape = tuple(int(n) for n in reader.array('<u4', d))
    tag = reader.tag()
    mask = reader.array(numpy.uint8, int(numpy.prod(shape))).reshape(shape)
    nodes = tuple(refine * n + 1 for n in shape)
    values = reader.array('<f8', int(numpy.prod(nodes))).reshape(nodes)
    reader.finish()
    domain = Domain(origin, mask.astype(bool))
    return DiscreteFunction(values.astype(numpy.float64), domain, refine), tag


def content_hash(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as source:
        for block in iter(lambda: source.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()
