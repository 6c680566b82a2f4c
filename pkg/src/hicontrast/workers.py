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

'''Bounded worker pool for independent solves.

Supports the following interface:

    pool = WorkerPool(threads)
        Creates a pool running at most threads jobs at once.  With a single
        thread every job runs inline at the point it is spawned.

    job = pool.Spawn(function, *args, raise_on_wait = False, **kargs)
        Schedules function(*args, **kargs) and returns a Job.

    job.Wait()
        Returns the job's result.  If raise_on_wait was set any exception
        raised by the job is re-raised here, otherwise it is reported on
        stderr and None is returned.

    WaitForAll(jobs)
        Waits for every job in turn, returning results in submission order.

    pool.map(function, items)
        Ordered fan-out/fan-in: every job is spawned with raise_on_wait set.

    with using_pool(pool) as pool:
        Yields pool, or a default WorkerPool closed again on exit when pool
        is None.

Results never depend on the number of threads: every reduction over job
results is performed by the caller in submission order.'''

import contextlib
import os
import sys
import traceback
from concurrent import futures

__all__ = [
    'WorkerPool',       # Bounded pool of worker threads
    'Job',              # Handle on a single spawned job
    'WaitForAll',       # Collect results of a list of jobs
    'default_threads',  # Thread budget from the environment
    'using_pool',       # Caller's pool or a temporary default one
]


def _check_env(name, default):
    '''Process wide defaults may be overridden from the environment.'''
    return int(os.environ.get(name, default))

DEFAULT_THREADS = _check_env('HICONTRAST_THREADS', 1)


def default_threads():
    return max(1, DEFAULT_THREADS)


class Job(object):
    '''Handle on a job spawned by a WorkerPool.  A job is either already
    complete (inline execution) or wraps a concurrent future.'''

    __slots__ = [
        '__function',       # Function run by this job, for reporting
        '__future',         # Future when running on a thread, else None
        '__result',         # (ok, value) pair for inline jobs
        '__raise_on_wait',  # Action to take on exception
    ]

    def __init__(self, function, future, result, raise_on_wait):
        self.__function = function
        self.__future = future
        self.__result = result
        self.__raise_on_wait = raise_on_wait

    def __outcome(self):
        if self.__future is None:
            return self.__result
        try:
            return (True, self.__future.result())
        except Exception as error:
            return (False, error)

    def Wait(self):
        ok, value = self.__outcome()
        if ok:
            return value
        elif self.__raise_on_wait:
            raise value
        else:
            # Nobody is waiting to catch this, so report it right here.
            print('Spawned job',
                getattr(self.__function, '__name__', '(unknown)'),
                'raised uncaught exception', file = sys.stderr)
            traceback.print_exception(
                type(value), value, value.__traceback__)
            return None

    def done(self):
        return self.__future is None or self.__future.done()


def WaitForAll(jobs):
    '''Waits for all jobs, returning their results in order.  If any job
    raises then the remaining jobs are still waited for before the first
    exception is propagated, so no work is left running behind our back.'''
    results = []
    failure = None
    for job in jobs:
        try:
            results.append(job.Wait())
        except Exception as error:
            if failure is None:
                failure = error
            results.append(None)
    if failure is not None:
        raise failure
    return results


class WorkerPool(object):
    __slots__ = [
        '__threads',        # Maximum number of concurrent jobs
        '__executor',       # ThreadPoolExecutor, created on first use
    ]

    def __init__(self, threads = None):
        if threads is None:
            threads = default_threads()
        if threads < 1:
            raise ValueError('Thread budget must be at least 1')
        self.__threads = int(threads)
        self.__executor = None

    @property
    def threads(self):
        return self.__threads

    def Spawn(self, function, *args, **kargs):
        raise_on_wait = kargs.pop('raise_on_wait', False)
        if self.__threads == 1:
            try:
                result = (True, function(*args, **kargs))
            except Exception as error:
                result = (False, error)
            return Job(function, None, result, raise_on_wait)
        else:
            if self.__executor is None:
                self.__executor = futures.ThreadPoolExecutor(
                    max_workers = self.__threads,
                    thread_name_prefix = 'hicontrast')
            future = self.__executor.submit(function, *args, **kargs)
            return Job(function, future, None, raise_on_wait)

    def map(self, function, items, **kargs):
        return WaitForAll([
            self.Spawn(function, item, raise_on_wait = True, **kargs)
            for item in items])

    def close(self):
        if self.__executor is not None:
            self.__executor.shutdown(wait = True)
            self.__executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


@contextlib.contextmanager
def using_pool(pool = None):
    if pool is not None:
        yield pool
    else:
        with WorkerPool() as pool:
            yield pool
