#!/usr/bin/env python

# Batch runner for coarse graining experiments.

import csv
import glob
import json
import logging
import os
import sys

if __name__ == '__main__':
    sys.path.append(
        os.path.join(os.path.dirname(__file__), '../..'))

from hicontrast.coarsegrain import Failure, estimate_homogenized, \
    scale_report
from hicontrast.config import ExperimentConfig, load_config
from hicontrast.fem import SolverFailure
from hicontrast.report import aggregate_reports, provenance, \
    snapshot_path, write_report
from hicontrast.snapshot import SnapshotError, content_hash, read_field, \
    write_field
from hicontrast.verify import HARNESSES, run_harness
from hicontrast.workers import WorkerPool

logger = logging.getLogger('hicontrast.tools.hcrun')


# Exit codes
EXIT_OK = 0
EXIT_INVALID = 1        # Configuration or input validation error
EXIT_SOLVER = 2         # A linear solve failed to converge
EXIT_FAIL = 3           # A checked property failed

VERBS = ('field', 'coarsen', 'verify', 'report')


def failure_code(failure):
    if isinstance(failure.error, SolverFailure):
        return EXIT_SOLVER
    return EXIT_INVALID


def describe_phase(s, fraction):
    if s.shape == (1, 1):
        label = '%g' % s[0, 0]
    elif s[0, 1] == 0 and s[0, 0] == s[1, 1]:
        label = '%g I' % s[0, 0]
    else:
        label = str(s.tolist())
    return '%-24s %7.2f%%' % (label, 100 * fraction)


# ----------------------------------------------------------------------------
#   Verbs

def cmd_field(config, args):
    os.makedirs(config.out, exist_ok = True)
    for seed in config.seeds:
        field = config.make_field(seed)
        path = snapshot_path(config.out, seed)
        write_field(path, field)
        print('%s  %s  %s' % (
            os.path.basename(path), content_hash(path)[:16],
            field.ensemble_tag))
        phases = field.phase_fractions()
        if len(phases) <= 8:
            for s, fraction in phases:
                print('    ' + describe_phase(s, fraction))
        else:
            print('    %d distinct phases' % len(phases))
    return EXIT_OK


def load_fields(config):
    '''Reads the snapshot of every seed, writing it first if missing.
    Returns (fields, snapshot paths).'''
    os.makedirs(config.out, exist_ok = True)
    fields = []
    paths = []
    for seed in config.seeds:
        path = snapshot_path(config.out, seed)
        if os.path.exists(path):
            logger.info('Reading %s', path)
            field = read_field(path)
            if (field.d, field.L_cells) != \
                    (config.d, config['ensemble']['L_cells']):
                raise SnapshotError(path, 'written for d = %d, L_cells = %d'
                    % (field.d, field.L_cells))
        else:
            field = config.make_field(seed)
            write_field(path, field)
        fields.append(field)
        paths.append(path)
    return fields, paths


def cmd_coarsen(config, args, pool):
    fields, paths = load_fields(config)
    scales = config['scales']
    solve = config.solve_config()
    by_seed = dict(zip(config.seeds, fields))

    estimate = estimate_homogenized(by_seed.__getitem__, scales['m'],
        config.seeds, solve, method = scales['estimator'], pool = pool,
        throw = False)
    if isinstance(estimate, Failure):
        print('Estimate of A_bar failed: %s' % estimate, file = sys.stderr)
        return failure_code(estimate)
    print('s_bar = %s  (%d samples, %s)' % (
        estimate.s_bar.tolist(), estimate.samples, estimate.method))

    code = EXIT_OK
    for seed, field, path in zip(config.seeds, fields, paths):
        extra = {
            'provenance': provenance(config, [path]),
            'estimate': estimate.as_dict(),
            'seed': seed,
        }
        report = scale_report(field, scales['m'], estimate.A_bar,
            scales['s_exponent'], scales['gamma'], solve, pool,
            k0 = config['geometry']['k0'], throw = False)
        base = os.path.join(config.out, 'coarsen-%d' % seed)
        if isinstance(report, Failure):
            print('seed %d: %s' % (seed, report), file = sys.stderr)
            write_partial(base, report, extra)
            code = max(code, failure_code(report))
            continue

        write_report(report, base, extra)
        checks = report.checks()
        print('seed %d: E_s = %.4g  theta_hat = %.3g  %s' % (
            seed, report.E_s, report.defects.theta_hat,
            ' '.join('%s=%s' % (name, 'ok' if ok else 'FAIL')
                for name, ok in sorted(checks.items()))))
        if not report.passed and code == EXIT_OK:
            code = EXIT_FAIL
    return code


class PartialReport(object):
    '''Stands in for a report whose computation failed.'''

    def __init__(self, failure):
        self.failure = failure

    def write_json(self, output, extra = None):
        data = {'partial': True, 'failure': str(self.failure)}
        data.update(extra or {})
        json.dump(data, output, sort_keys = True, indent = 1)
        output.write('\n')

    def write_csv(self, output):
        writer = csv.writer(output, lineterminator = '\r\n')
        writer.writerow(['partial', 'failure'])
        writer.writerow(['true', str(self.failure)])


def write_partial(base, failure, extra):
    write_report(PartialReport(failure), base, extra)


def cmd_verify(config, args, pool):
    if args:
        name = args[0]
    else:
        name = config['harness']['name']
    if not name:
        raise ValueError(
            'No harness named, expected one of %s' % ', '.join(HARNESSES))
    if name not in HARNESSES:
        raise ValueError('Unknown harness %r' % name)
    settings = config.harness_settings()

    fields, paths = load_fields(config)
    record = run_harness(name, fields, settings, config.solve_config(), pool,
        throw = False)
    base = os.path.join(config.out, 'verify-%s' % name)
    extra = {'provenance': provenance(config, paths)}
    if isinstance(record, Failure):
        print('%s: %s' % (name, record), file = sys.stderr)
        write_partial(base, record, extra)
        return failure_code(record)

    write_report(record, base, extra)
    print('%s: %s  %s' % (name, 'PASS' if record.passed else 'FAIL',
        ' '.join('%s=%s' % item for item in sorted(record.summary.items()))))
    if record.failures:
        return EXIT_SOLVER
    return EXIT_OK if record.passed else EXIT_FAIL


def cmd_report(config, args):
    paths = args or sorted(
        path for path in glob.glob(os.path.join(config.out, '*.json')))
    if not paths:
        raise ValueError('No JSON reports found in %s' % config.out)
    target = os.path.join(config.out, 'summary.csv')
    with open(target, 'w', encoding = 'utf-8', newline = '') as output:
        count = aggregate_reports(paths, output)
    print('%d reports summarised in %s' % (count, target))
    return EXIT_OK


# ----------------------------------------------------------------------------

def configure(options):
    if options.config:
        config = load_config(options.config)
    else:
        config = ExperimentConfig(source = '<defaults>')
    if options.out is not None:
        config = config.override('run', 'out', options.out)
    if options.threads is not None:
        config = config.override('run', 'threads', options.threads)
    if options.seed_offset is not None:
        config = config.override('run', 'seed_offset', options.seed_offset)
    return config


def dispatch(verb, config, args):
    if verb == 'field':
        return cmd_field(config, args)
    elif verb == 'report':
        return cmd_report(config, args)
    with WorkerPool(config.threads) as pool:
        if verb == 'coarsen':
            return cmd_coarsen(config, args, pool)
        else:
            return cmd_verify(config, args, pool)


def run(argv = None):
    '''Runs one verb and returns the process exit code.'''
    from optparse import OptionParser
    parser = OptionParser(
        usage = '%prog [options] field|coarsen|verify <harness>|report ...',
        description =
            'Generates coefficient fields, computes coarse grained matrices '
            'and runs the regularity harnesses.')

    parser.add_option(
        '-c', '--config',
        dest = 'config', default = None,
        help = 'Experiment configuration file')
    parser.add_option(
        '-o', '--out',
        dest = 'out', default = None,
        help = 'Output directory, overriding [run] out')
    parser.add_option(
        '-t', '--threads',
        dest = 'threads', default = None, type = 'int',
        help = 'Thread budget, overriding [run] threads')
    parser.add_option(
        '-s', '--seed-offset',
        dest = 'seed_offset', default = None, type = 'int',
        help = 'Added to every seed, overriding [run] seed_offset')
    parser.add_option(
        '-v', '--verbose',
        dest = 'verbose', default = 0, action = 'count',
        help = 'More logging, repeat for debug output')

    options, args = parser.parse_args(argv)
    logging.basicConfig(
        level = [logging.WARNING, logging.INFO, logging.DEBUG][
            min(options.verbose, 2)],
        format = '%(levelname)s %(name)s: %(message)s')

    try:
        config = configure(options)
        verb = args[0] if args else config.command
        if verb not in VERBS:
            parser.print_usage(sys.stderr)
            return EXIT_INVALID
        return dispatch(verb, config, args[1:])
    except SolverFailure as error:
        print('Solver failure: %s' % error, file = sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as error:
        print('Error: %s' % error, file = sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
