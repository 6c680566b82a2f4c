#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import unittest

import numpy

if __name__ == '__main__':
    import numtest
else:
    from . import numtest

from hicontrast.config import ConfigError, ExperimentConfig, load_config, \
    parse_config
from hicontrast.fem import SolveConfig


EXAMPLE = '''\
[run]
command = coarsen
seeds = 0 1, 2
seed_offset = 10
threads = 2

[ensemble]
generator = checkerboard
L_cells = 27
sigma2 = 100

[scales]
m = 2
gamma = none

[solver]
solver_kind = cg
max_iter = 400
'''


class ParseTest(numtest.TestCase):
    def test_example(self):
        config = parse_config(EXAMPLE)
        self.assertEqual(config.command, 'coarsen')
        self.assertEqual(config.seeds, [10, 11, 12])
        self.assertEqual(config.threads, 2)
        self.assertEqual(config['ensemble']['sigma2'], 100.)
        self.assertEqual(config['ensemble']['sigma1'], 1.)
        self.assertIsNone(config['scales']['gamma'])
        solve = config.solve_config()
        self.assertIsInstance(solve, SolveConfig)
        self.assertEqual(solve.solver_kind, 'cg')
        self.assertEqual(solve.max_iter, 400)

    def test_defaults(self):
        config = ExperimentConfig()
        resolved = config.resolved()
        self.assertEqual(resolved['run']['seeds'], [0])
        self.assertEqual(resolved['ensemble']['L_cells'], 81)
        self.assertEqual(resolved['solver']['tol_rel'], 1e-10)
        self.assertEqual(config.d, 2)
        self.assertGreaterEqual(config.threads, 1)

    def test_resolved_is_a_copy(self):
        config = ExperimentConfig()
        config.resolved()['run']['seeds'].append(5)
        config['run']['out'] = 'elsewhere'
        self.assertEqual(config.seeds, [0])
        self.assertEqual(config.out, '.')

    def test_keys_are_case_sensitive(self):
        with self.assertRaises(ConfigError) as context:
            parse_config('[ensemble]\nl_cells = 9\n')
        self.assertEqual(context.exception.key, 'l_cells')

    def test_unknown_names(self):
        with self.assertRaises(ConfigError) as context:
            parse_config('[plot]\ncolour = red\n', source = 'x.ini')
        self.assertEqual(context.exception.section, 'plot')
        self.assertEqual(str(context.exception), 'x.ini [plot]: Unknown section')
        with self.assertRaises(ConfigError) as context:
            parse_config('[run]\nverbose = 1\n')
        self.assertEqual(context.exception.key, 'verbose')

    def test_bad_values(self):
        with self.assertRaises(ConfigError) as context:
            parse_config('[ensemble]\nd = two\n')
        self.assertIn("'two'", str(context.exception))
        self.assertRaises(ConfigError, parse_config, 'seeds = 1\n')
        self.assertRaises(ConfigError, parse_config, '[run]\n[run]\n')
        self.assertTrue(issubclass(ConfigError, ValueError))


class ValidationTest(numtest.TestCase):
    def invalid(self, section, key, value):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig({section: {key: value}})
        return context.exception

    def test_invariants(self):
        self.invalid('run', 'seeds', [])
        self.invalid('run', 'threads', 0)
        self.invalid('ensemble', 'generator', 'voronoi')
        self.invalid('ensemble', 'd', 3)
        self.invalid('scales', 's_exponent', 0.5)
        self.invalid('scales', 'estimator', 'median')
        self.invalid('scales', 'samples', 0)
        self.invalid('harness', 'name', 'moments')
        self.invalid('geometry', 'k0', 0)
        self.invalid('harness', 'contrasts', [1., 0.5])
        self.invalid('harness', 'contrast_factor', 0.)

    def test_scale_limited_by_period(self):
        error = self.invalid('scales', 'm', 5)
        self.assertEqual(error.key, 'm')
        self.assertIn('log3', str(error))
        self.assertRaises(ConfigError, ExperimentConfig,
            {'ensemble': {'L_cells': 9}, 'harness': {'scales': [1, 3]}})

    def test_planar_generators(self):
        self.assertRaises(ConfigError, ExperimentConfig,
            {'ensemble': {'generator': 'stream', 'd': 1}})

    def test_solver_errors(self):
        error = self.invalid('solver', 'solver_kind', 'multigrid')
        self.assertEqual(error.section, 'solver')

    def test_override(self):
        config = ExperimentConfig()
        changed = config.override('run', 'seed_offset', 100)
        self.assertEqual(changed.seeds, [100])
        self.assertEqual(config.seeds, [0])
        self.assertRaises(ConfigError, config.override, 'run', 'seeds', [])


class DerivedTest(numtest.TestCase):
    def test_make_field(self):
        config = ExperimentConfig({'ensemble': {'L_cells': 9}, 'scales': {'m': 1}})
        a = config.make_field(3)
        self.assertEqual(a.L_cells, 9)
        self.assertEqual(a.seed, 3)
        self.assertTrue(a.same_cells(config.make_field(3)))

    def test_generators(self):
        for generator in ('constant', 'laminate', 'poisson', 'stream',
                'lognormal'):
            config = ExperimentConfig({
                'ensemble': {'generator': generator, 'L_cells': 9},
                'scales': {'m': 1}})
            field = config.make_field(0)
            self.assertEqual(field.d, 2)

    def test_constant_with_antisymmetric_part(self):
        config = ExperimentConfig({
            'ensemble': {'generator': 'constant', 'L_cells': 3, 'b': 0.5},
            'scales': {'m': 1}})
        field = config.make_field(0)
        self.assertClose(field.k[1, 1], [[0., 0.5], [-0.5, 0.]])

    def test_harness_settings(self):
        config = ExperimentConfig({
            'scales': {'m': 3, 'm_min': 2},
            'harness': {'name': 'approx'}})
        settings = config.harness_settings()
        self.assertEqual(settings['scales'], [2, 3])
        self.assertEqual(settings['m'], 3)
        self.assertEqual(settings['s_exponent'], 0.4)
        self.assertIsNone(settings['gamma'])
        self.assertEqual(settings['contrasts'], [])
        self.assertNotIn('name', settings)

    def test_contrast_sweep_settings(self):
        config = parse_config(
            '[scales]\nm = 2\ngamma = 0.5\n'
            '[harness]\nname = caccioppoli\ncontrasts = 1, 1e2 1e4\n'
            'contrast_factor = 2.5\n')
        settings = config.harness_settings()
        self.assertEqual(settings['contrasts'], [1., 100., 10000.])
        self.assertEqual(settings['contrast_factor'], 2.5)
        self.assertEqual(settings['gamma'], 0.5)


class LoadTest(numtest.TestCase):
    def test_load(self):
        path = os.path.join(self.scratch, 'experiment.ini')
        with open(path, 'w', encoding = 'utf-8') as output:
            output.write(EXAMPLE)
        config = load_config(path)
        self.assertEqual(config.source, path)
        self.assertEqual(config['ensemble']['L_cells'], 27)

    def test_missing_file(self):
        path = os.path.join(self.scratch, 'missing.ini')
        with self.assertRaises(ConfigError) as context:
            load_config(path)
        self.assertIn(path, str(context.exception))


if __name__ == '__main__':
    unittest.main()
