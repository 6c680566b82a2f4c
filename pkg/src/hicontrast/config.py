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

'''Experiment configuration.

An experiment is described by a flat UTF-8 file of key = value lines under
[section] headers, for example

    [run]
    seeds = 0 1 2
    out = results

    [ensemble]
    generator = checkerboard
    d = 2
    L_cells = 81
    sigma1 = 1
    sigma2 = 9

Every key is checked against SCHEMA below; unknown sections or keys, and
values of the wrong type, raise ConfigError.  Keys not given take their
default value, and the fully resolved configuration is what gets recorded in
reports.'''

import configparser
import logging

import numpy

from . import fieldgen
from .fem import SolveConfig
from .verify import HARNESSES
from .workers import default_threads

__all__ = [
    'ConfigError',          # Invalid configuration text or values
    'ExperimentConfig',     # Validated configuration
    'load_config',          # Reads an ExperimentConfig from a file
    'parse_config',         # Parses an ExperimentConfig from text
    'SCHEMA',               # Known sections and keys
    'GENERATORS',           # Names of the field generators
]

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, message, section = None, key = None, source = None):
        ValueError.__init__(self, message, section, key)
        self.message = message
        self.section = section
        self.key = key
        self.source = source

    def __str__(self):
        where = []
        if self.source:
            where.append(str(self.source))
        if self.section:
            where.append('[%s]' % self.section)
        if self.key:
            where.append(self.key)
        if where:
            return '%s: %s' % (' '.join(where), self.message)
        return self.message


# ----------------------------------------------------------------------------
#   Value parsers

def _int_list(text):
    return [int(word) for word in text.replace(',', ' ').split()]

def _float_list(text):
    return [float(word) for word in text.replace(',', ' ').split()]

def _optional_float(text):
    text = text.strip()
    if text.lower() in ('', 'none'):
        return None
    return float(text)

def _optional_int(text):
    text = text.strip()
    if text.lower() in ('', 'none'):
        return None
    return int(text)

def _word(text):
    return text.strip()


# Each key maps to (parser, default).  A default of None means "not given".
SCHEMA = {
    'run': {
        'command':      (_word, ''),
        'out':          (_word, '.'),
        'threads':      (int, None),
        'seeds':        (_int_list, [0]),
        'seed_offset':  (int, 0),
    },
    'ensemble': {
        'generator':    (_word, 'checkerboard'),
        'd':            (int, 2),
        'L_cells':      (int, 81),
        'sigma1':       (float, 1.),
        'sigma2':       (float, 9.),
        'p':            (float, 0.5),
        'axis':         (int, 0),
        'b':            (float, 0.),
        'intensity':    (float, 0.01),
        'radius':       (float, 2.),
        'correlation':  (int, 2),
        'amplitude':    (float, 1.),
    },
    'geometry': {
        'k0':           (int, 4),
    },
    'solver': {
        'tol_rel':      (float, 1e-10),
        'max_iter':     (_optional_int, None),
        'solver_kind':  (_word, 'auto'),
        'refine':       (int, 1),
    },
    'scales': {
        'm':            (int, 2),
        'm_min':        (int, 1),
        's_exponent':   (float, 0.4),
        'gamma':        (_optional_float, None),
        'samples':      (int, 1),
        'estimator':    (_word, 'cube'),
    },
    'harness': {
        'name':         (_word, ''),
        'boundary':     (_word, 'affine'),
        'lambda_bar':   (_optional_float, None),
        'scales':       (_int_list, []),
        'k':            (int, 1),
        'radii':        (_int_list, [3, 5, 9]),
        'max_ratio':    (_optional_float, None),
        'residual_tol': (_optional_float, None),
        'min_gap':      (float, 1e3),
        'contrasts':    (_float_list, []),
        'contrast_factor': (float, 3.),
    },
}


def _isotropic_matrix(d, sigma):
    return sigma * numpy.eye(d)

def _antisymmetric(d, b):
    return b * fieldgen.ROTATION if d == 2 else numpy.zeros((d, d))


# Each generator takes the [ensemble] section and a seed.
GENERATORS = {
    'constant': lambda e, seed: fieldgen.constant_field(e['d'],
        _isotropic_matrix(e['d'], e['sigma1']),
        _antisymmetric(e['d'], e['b']), e['L_cells']),
    'checkerboard': lambda e, seed: fieldgen.checkerboard(e['d'],
        e['L_cells'], e['sigma1'], e['sigma2'], e['p'], seed),
    'laminate': lambda e, seed: fieldgen.laminate(e['d'], e['axis'],
        e['sigma1'], e['sigma2'], e['L_cells']),
    'poisson': lambda e, seed: fieldgen.poisson_inclusions(e['d'],
        e['L_cells'], e['intensity'], e['radius'], e['sigma1'], e['sigma2'],
        seed),
    'stream': lambda e, seed: fieldgen.stream_matrix_field(e['L_cells'],
        e['correlation'], e['amplitude'], seed),
    'lognormal': lambda e, seed: fieldgen.lognormal_field(e['L_cells'],
        e['correlation'], e['amplitude'], seed),
}

# Generators which only exist in two dimensions.
PLANAR_GENERATORS = ('stream', 'lognormal')


def _max_scale(L_cells):
    '''Largest n with 3^n <= L_cells.'''
    n = 0
    while 3 ** (n + 1) <= L_cells:
        n += 1
    return n


class ExperimentConfig(object):
    __slots__ = [
        '__values',         # {section: {key: value}}, fully resolved
        'source',           # File name or '<string>'
    ]

    def __init__(self, values = None, source = None):
        resolved = {}
        for section, keys in SCHEMA.items():
            resolved[section] = dict(
                (key, default) for key, (_, default) in keys.items())
        for section, keys in (values or {}).items():
            if section not in SCHEMA:
                raise ConfigError('Unknown section', section, source = source)
            for key, value in keys.items():
                if key not in SCHEMA[section]:
                    raise ConfigError('Unknown key', section, key, source)
                resolved[section][key] = value
        self.__values = resolved
        self.source = source
        self.__validate()

    def __getitem__(self, section):
        return dict(self.__values[section])

    def override(self, section, key, value):
        '''Returns a copy with one key replaced, validated again.'''
        values = self.resolved()
        values[section][key] = value
        return ExperimentConfig(values, self.source)

    def resolved(self):
        '''Deep copy of every section with defaults filled in.'''
        return dict(
            (section, dict((key, list(value) if isinstance(value, list)
                else value) for key, value in keys.items()))
            for section, keys in self.__values.items())

    def __fail(self, message, section, key):
        raise ConfigError(message, section, key, self.source)

    def __validate(self):
        run = self.__values['run']
        ensemble = self.__values['ensemble']
        scales = self.__values['scales']
        harness = self.__values['harness']

        if not run['seeds']:
            self.__fail('The seed list is empty', 'run', 'seeds')
        if run['threads'] is not None and run['threads'] < 1:
            self.__fail('Thread budget must be at least 1', 'run', 'threads')

        generator = ensemble['generator']
        if generator not in GENERATORS:
            self.__fail('Unknown generator %r, expected one of %s' % (
                generator, ', '.join(sorted(GENERATORS))),
                'ensemble', 'generator')
        if ensemble['d'] not in (1, 2):
            self.__fail('Only d = 1 and d = 2 are supported', 'ensemble', 'd')
        if generator in PLANAR_GENERATORS and ensemble['d'] != 2:
            self.__fail('Generator %r needs d = 2' % generator, 'ensemble', 'd')
        if ensemble['L_cells'] < 1:
            self.__fail('L_cells must be positive', 'ensemble', 'L_cells')

        if self.__values['geometry']['k0'] < 1:
            self.__fail('k0 must be positive', 'geometry', 'k0')

        top = _max_scale(ensemble['L_cells'])
        if not 1 <= scales['m_min'] <= scales['m']:
            self.__fail('Need 1 <= m_min <= m', 'scales', 'm_min')
        if scales['m'] > top:
            self.__fail('Scale m = %d exceeds log3(L_cells) = %d' % (
                scales['m'], top), 'scales', 'm')
        if not 0 < scales['s_exponent'] < 0.5:
            self.__fail('s_exponent must lie in (0, 1/2)',
                'scales', 's_exponent')
        if scales['samples'] < 1:
            self.__fail('At least one sample is needed', 'scales', 'samples')
        if scales['estimator'] not in ('cube', 'periodic'):
            self.__fail('Estimator must be cube or periodic',
                'scales', 'estimator')

        if harness['name'] and harness['name'] not in HARNESSES:
            self.__fail('Unknown harness %r' % harness['name'],
                'harness', 'name')
        if any(n < 1 or n > top for n in harness['scales']):
            self.__fail('Harness scales must lie in 1..%d' % top,
                'harness', 'scales')
        if harness['k'] < 0:
            self.__fail('Degree k must be non negative', 'harness', 'k')
        if any(c < 1 for c in harness['contrasts']):
            self.__fail('Contrasts must be at least 1', 'harness', 'contrasts')
        if not harness['contrast_factor'] > 0:
            self.__fail('contrast_factor must be positive',
                'harness', 'contrast_factor')

        try:
            self.solve_config()
        except ValueError as error:
            raise ConfigError(str(error), 'solver', source = self.source)

    # ------------------------------------------------------------------------
    #   Derived objects

    @property
    def command(self):
        return self.__values['run']['command']

    @property
    def out(self):
        return self.__values['run']['out']

    @property
    def threads(self):
        threads = self.__values['run']['threads']
        return default_threads() if threads is None else threads

    @property
    def seeds(self):
        offset = self.__values['run']['seed_offset']
        return [seed + offset for seed in self.__values['run']['seeds']]

    @property
    def d(self):
        return self.__values['ensemble']['d']

    def solve_config(self):
        solver = self.__values['solver']
        return SolveConfig(tol_rel = solver['tol_rel'],
            max_iter = solver['max_iter'],
            solver_kind = solver['solver_kind'], refine = solver['refine'])

    def make_field(self, seed):
        ensemble = self.__values['ensemble']
        return GENERATORS[ensemble['generator']](ensemble, seed)

    def harness_settings(self):
        '''Settings dictionary consumed by verify.run_harness.'''
        harness = self.__values['harness']
        scales = self.__values['scales']
        settings = dict(harness)
        del settings['name']
        settings['m'] = scales['m']
        settings['s_exponent'] = scales['s_exponent']
        settings['gamma'] = scales['gamma']
        if not settings['scales']:
            settings['scales'] = list(range(scales['m_min'], scales['m'] + 1))
        return settings


# ----------------------------------------------------------------------------
#   Parsing

def parse_config(text, source = '<string>'):
    parser = configparser.ConfigParser(
        interpolation = None, default_section = '\0', strict = True)
    parser.optionxform = str        # Keys are case sensitive
    try:
        parser.read_string(text, source = source)
    except configparser.Error as error:
        raise ConfigError(error.message.strip(), source = source)

    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError('Unknown section', section, source = source)
        values[section] = {}
        for key, text_value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError('Unknown key', section, key, source)
            convert, _ = SCHEMA[section][key]
            try:
                values[section][key] = convert(text_value)
            except ValueError:
                raise ConfigError(
                    'Cannot parse %r' % text_value, section, key, source)
    logger.debug('Parsed configuration %s', source)
    return ExperimentConfig(values, source)


def load_config(path):
    try:
        with open(path, encoding = 'utf-8') as input:
            text = input.read()
    except OSError as error:
        raise ConfigError('Cannot read: %s' % error.strerror, source = path)
    return parse_config(text, source = path)
