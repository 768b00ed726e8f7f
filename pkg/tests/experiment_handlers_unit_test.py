# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
import queue
import threading
import unittest
from unittest.mock import patch

import pytest

from mesomacro.experiment_handlers import WORKERS_ENV, JobRunner, JobWorker, run_job


def square(value):
    return value * value


def broken(value):
    raise ZeroDivisionError("job {}".format(value))


class TestJobWorker(unittest.TestCase):
    def setUp(self):
        self.job_queue = queue.Queue()
        self.result_queue = queue.Queue()
        self.worker = JobWorker(self.job_queue, self.result_queue, threading.Event())

    def test_runs_until_sentinel(self):
        self.job_queue.put((1, square, (3,)))
        self.job_queue.put((2, broken, (4,)))
        self.job_queue.put((None, None, None))
        self.job_queue.put((3, square, (5,)))
        self.worker.run()

        assert self.result_queue.get_nowait() == (1, 9, None)
        key, result, error = self.result_queue.get_nowait()
        assert (key, result) == (2, None)
        assert "ZeroDivisionError" in error
        assert self.result_queue.empty()
        assert self.job_queue.qsize() == 1

    def test_stop_flag(self):
        self.worker.stop_flag.set()
        self.job_queue.put((1, square, (3,)))
        self.worker.run()
        assert self.result_queue.empty()


class TestsJobRunner(object):
    def test_sorted_by_key(self):
        jobs = [(key, square, (key,)) for key in (3, 1, 2)]
        assert JobRunner(workers=1).run(jobs) == [(1, 1), (2, 4), (3, 9)]

    def test_no_jobs(self):
        assert JobRunner(workers=4).run([]) == []

    def test_duplicate_keys(self):
        with pytest.raises(ValueError):
            JobRunner(workers=1).run([(1, square, (1,)), (1, square, (2,))])

    def test_failure(self):
        with pytest.raises(RuntimeError, match="job 7"):
            JobRunner(workers=1).run([(0, square, (1,)), (1, broken, (7,))])

    def test_single_job_stays_in_process(self):
        runner = JobRunner(workers=4)
        with patch.object(runner, "_run_parallel") as parallel:
            assert runner.run([("a", square, (2,))]) == [("a", 4)]
        parallel.assert_not_called()

    def test_workers_from_environment(self):
        with patch.dict("os.environ", {WORKERS_ENV: "3"}):
            assert JobRunner().workers == 3
        assert JobRunner(workers=2).workers == 2

    def test_run_job(self):
        assert run_job("k", square, (4,)) == ("k", 16, None)
        assert run_job("k", broken, (1,))[2] is not None
