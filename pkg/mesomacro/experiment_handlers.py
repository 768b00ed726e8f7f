# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Handlers are classes that assist the experiment harness in running
independent episodes (seeds, grid points, sweep scales) in worker processes
"""
import logging
from multiprocessing import Event, Process, Queue
from queue import Empty
import traceback

from mesomacro.helpers import env_int

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

WORKERS_ENV = "MESOMACRO_WORKERS"
JOB_QUEUE_TIMEOUT = 0.1


class JobWorker(Process):
    """Process running jobs from a queue until stopped

    A job is ``(key, function, args)``; the worker puts ``(key, result, error)``
    on the result queue, with ``error`` a formatted traceback or None.
    """

    def __init__(self, job_queue, result_queue, stop_flag=None):
        super(JobWorker, self).__init__()
        self.daemon = True
        self.job_queue = job_queue
        self.result_queue = result_queue
        self.stop_flag = stop_flag or Event()

    def stop(self):
        """Stops process execution"""
        self.stop_flag.set()
        if self.is_alive():
            self.join()

    def run(self):
        while not self.stop_flag.is_set():
            try:
                key, function, args = self.job_queue.get(timeout=JOB_QUEUE_TIMEOUT)
            except Empty:
                continue

            if key is None:
                break

            try:
                self.result_queue.put((key, function(*args), None))
            except Exception:  # pylint: disable=broad-except
                self.result_queue.put((key, None, traceback.format_exc()))


def run_job(key, function, args):
    try:
        return key, function(*args), None
    except Exception:  # pylint: disable=broad-except
        return key, None, traceback.format_exc()


class JobRunner(object):
    """Fan jobs out to worker processes and join their results in key order

    With one worker the jobs run in the calling process, so serial and parallel
    runs return the same results.
    """

    def __init__(self, workers=None):
        self.workers = env_int(WORKERS_ENV, 1) if workers is None else int(workers)

    def run(self, jobs):
        """Run ``(key, function, args)`` jobs

        :param list jobs: the jobs; functions and arguments must be picklable when run in parallel
        :returns: (key, result) pairs sorted by key
        :rtype: list
        :raises RuntimeError: if any job failed
        """
        jobs = list(jobs)
        keys = [job[0] for job in jobs]
        if len(set(keys)) != len(keys):
            raise ValueError("Job keys must be unique")

        if self.workers <= 1 or len(jobs) <= 1:
            results = [run_job(*job) for job in jobs]
        else:
            results = self._run_parallel(jobs)

        failed = [(key, error) for key, _, error in results if error is not None]
        if failed:
            key, error = failed[0]
            raise RuntimeError("Job {!r} failed ({} failures in total):\n{}".format(key, len(failed), error))

        return sorted(((key, result) for key, result, _ in results), key=lambda item: item[0])

    def _run_parallel(self, jobs):
        job_queue, result_queue = Queue(), Queue()
        stop_flag = Event()
        count = min(self.workers, len(jobs))
        workers = [JobWorker(job_queue, result_queue, stop_flag) for _ in range(count)]
        logger.info("Running %d jobs on %d workers", len(jobs), count)

        for worker in workers:
            worker.start()
        try:
            for job in jobs:
                job_queue.put(job)
            for _ in workers:
                job_queue.put((None, None, None))
            results = [result_queue.get() for _ in jobs]
        finally:
            for worker in workers:
                worker.stop()
        return results
