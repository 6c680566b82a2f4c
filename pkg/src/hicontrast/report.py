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

'''Report persistence.

Reports are written as pairs of files: a JSON document (UTF-8, sorted keys)
carrying the full result together with its provenance, and a CSV table
(RFC 4180, CRLF line ends) for plotting.  Provenance is the resolved
configuration and the SHA-256 hash of every snapshot the result was computed
from; nothing time or host dependent goes in, so reports are reproducible
byte for byte.'''

import csv
import json
import logging
import os

from .fieldgen import RNG_ALGORITHM
from .snapshot import content_hash

__all__ = [
    'provenance',           # Provenance dictionary for a report
    'write_report',         # Writes the JSON and CSV pair of a report
    'aggregate_reports',    # Summary CSV table over JSON reports
    'snapshot_path',        # Standard file name of a field snapshot
]

logger = logging.getLogger(__name__)


def snapshot_path(out, seed):
    return os.path.join(out, 'field-%d.cgf' % seed)


def provenance(config, snapshots = ()):
    '''snapshots is a list of file names, recorded with their content hash
    under their base name so the report does not depend on where the output
    directory lives.'''
    return {
        'config': config.resolved(),
        'rng': RNG_ALGORITHM,
        'snapshots': dict(
            (os.path.basename(path), content_hash(path))
            for path in snapshots),
    }


def write_report(report, base, extra = None):
    '''Writes base.json and base.csv from any object with write_json and
    write_csv methods, returning the two file names.'''
    directory = os.path.dirname(base)
    if directory:
        os.makedirs(directory, exist_ok = True)
    json_path = base + '.json'
    csv_path = base + '.csv'
    with open(json_path, 'w', encoding = 'utf-8', newline = '\n') as output:
        report.write_json(output, extra)
    with open(csv_path, 'w', encoding = 'utf-8', newline = '') as output:
        report.write_csv(output)
    logger.info('Wrote %s and %s', json_path, csv_path)
    return json_path, csv_path


def _flatten(data, prefix = ''):
    '''Scalar leaves of nested dictionaries with dotted names.  Lists are
    left out: they belong to the per report CSV tables.'''
    for key in sorted(data):
        value = data[key]
        name = prefix + key
        if isinstance(value, dict):
            if key not in ('config', 'snapshots'):
                yield from _flatten(value, name + '.')
        elif isinstance(value, (str, int, float, bool)) or value is None:
            yield name, value


def _cell(value):
    if value is None:
        return ''
    elif isinstance(value, float):
        return repr(value)
    return value


def aggregate_reports(paths, output):
    '''Writes one CSV row per JSON report, with a column for every scalar
    found in any of them.  Returns the number of rows written.'''
    rows = []
    for path in paths:
        with open(path, encoding = 'utf-8') as input:
            try:
                data = json.load(input)
            except ValueError as error:
                raise ValueError('%s: not a JSON report (%s)' % (path, error))
        if not isinstance(data, dict):
            raise ValueError('%s: not a JSON report' % path)
        row = dict(_flatten(data))
        row['file'] = os.path.basename(path)
        rows.append(row)

    columns = sorted(set().union(*rows)) if rows else []
    if 'file' in columns:
        columns.remove('file')
        columns.insert(0, 'file')
    writer = csv.writer(output, lineterminator = '\r\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return len(rows)
