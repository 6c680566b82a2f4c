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
#
# You should have received a copy of the GNU General Public License along
# with this program; if not, write to the Free Software Foundation, Inc., 51
# Franklin St, Fifth Floor, Boston, MA 02110-1301 USA

'''Numerical coarse graining of high contrast random elliptic coefficients.
This package contains the following modules:

    fieldgen
        Random and deterministic coefficient fields on a periodic grid.

    geometry
        Cell sets, adapted triadic cubes and balls, and their partitions.

    fem
        Bilinear finite elements, Dirichlet, periodic and energy problems.

    coarsegrain
        Coarse grained matrices, homogenized estimates and multiscale error
        quantities.

    sobolev
        Volume normalized and spectral negative Sobolev norms.

    harmonics
        Exact polynomials and harmonic bases of the homogenized operator.

    verify
        Measurable regularity estimates and their harnesses.

    config, report, snapshot, workers
        Experiment plumbing used by the hcrun tool.
'''

from .fieldgen import *
from .geometry import *
from .fem import *
from .coarsegrain import *
from .sobolev import *
from .harmonics import *
from .verify import *
from ._version import __version__

from . import fieldgen, geometry, fem, coarsegrain, sobolev, harmonics, verify

# The plumbing modules are available but not exported by default.
__all__ = fieldgen.__all__ + geometry.__all__ + fem.__all__ + \
    coarsegrain.__all__ + sobolev.__all__ + harmonics.__all__ + verify.__all__
