#!/usr/bin/env python
# -*- coding: utf-8 -*-

import threading
import unittest
from unittest import mock

if __name__ == '__main__':
    import numtest
else:
    from . import numtest

from hicontrast.workers import WaitForAll, WorkerPool, using_pool


def square(x):
    return x * x

def fails(x):
    raise RuntimeError('job %d failed' % x)


class WorkerPoolTest(numtest.TestCase):
    def test_inline_pool_runs_immediately(self):
        with WorkerPool(1) as pool:
            job = pool.Spawn(square, 7)
            self.assertTrue(job.done())
            self.assertEqual(job.Wait(), 49)

    def test_map_preserves_order(self):
        for threads in (1, 4):
            with WorkerPool(threads) as pool:
                self.assertEqual(
                    pool.map(square, range(20)), [x * x for x in range(20)])

    def test_threaded_pool_uses_threads(self):
        names = set()
        lock = threading.Lock()
        barrier = threading.Barrier(2, timeout = 10)

        def record(x):
            with lock:
                names.add(threading.current_thread().name)
            barrier.wait()
            return x

        with WorkerPool(2) as pool:
            self.assertEqual(pool.map(record, [1, 2]), [1, 2])
        self.assertEqual(len(names), 2)

    def test_raise_on_wait(self):
        for threads in (1, 3):
            with WorkerPool(threads) as pool:
                job = pool.Spawn(fails, 3, raise_on_wait = True)
                self.assertRaises(RuntimeError, job.Wait)

    def test_unwaited_failure_returns_none(self):
        with WorkerPool(1) as pool:
            job = pool.Spawn(fails, 1)
            # The traceback goes to stderr, nothing is raised.
            self.assertIsNone(job.Wait())

    def test_wait_for_all_propagates_first_failure(self):
        with WorkerPool(2) as pool:
            jobs = [
                pool.Spawn(square, 2, raise_on_wait = True),
                pool.Spawn(fails, 5, raise_on_wait = True),
                pool.Spawn(square, 3, raise_on_wait = True)]
            with self.assertRaises(RuntimeError) as context:
                WaitForAll(jobs)
            self.assertIn('job 5', str(context.exception))
            self.assertTrue(all(job.done() for job in jobs))

    def test_bad_budget(self):
        self.assertRaises(ValueError, WorkerPool, 0)

    def test_using_pool(self):
        shut = WorkerPool.close
        with mock.patch.object(WorkerPool, 'close', autospec = True) as close:
            with using_pool() as pool:
                self.assertIsInstance(pool, WorkerPool)
                self.addCleanup(shut, pool)
                self.assertEqual(pool.map(square, [3]), [9])
            close.assert_called_once_with(pool)

            with WorkerPool(1) as given:
                with using_pool(given) as pool:
                    self.assertIs(pool, given)
                # Only the outer block closes the pool it was given.
                self.assertEqual(close.call_count, 1)
            self.assertEqual(close.call_count, 2)


if __name__ == '__main__':
    unittest.main()
