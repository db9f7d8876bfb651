"""Executors behind one submission interface.

The controller (:meth:`mmr.runtime.Runtime._collect`) calls ``submit`` with
an events queue; executors push ``("partial", handle, record)`` as progress
records arrive and ``("done", handle, None)`` once the handle has a result.
"""

from __future__ import annotations

import os
import subprocess
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from . import wire
from .errors import BackendUnavailable, DecodeError
from .values import ErrorObject

PENDING, RUNNING, RESOLVED, CANCELLED = "pending", "running", "resolved", "cancelled"
CANCEL_GRACE_SECS = 2.0
STARTUP_TIMEOUT_SECS = 30.0


def watchdog_timeout() -> float:
    try:
        value = float(os.environ.get("MMR_WORKER_TIMEOUT_SECS", "30"))
    except ValueError:
        value = 30.0
    return value if value > 0 else 30.0


class FutureHandle:
    """State of one submitted task: pending -> running -> resolved, or cancelled."""

    def __init__(self, spec, events):
        self.spec = spec
        self.task_id = spec.task_id
        self.events = events
        self.state = PENDING
        self.result = None
        self.cancel_requested = False
        self.lock = threading.Lock()

    def start(self) -> bool:
        with self.lock:
            if self.state != PENDING:
                return False
            self.state = RUNNING
            return True

    def finish(self, result) -> bool:
        """Record the result (first caller wins) and notify the controller."""
        with self.lock:
            if self.state in (RESOLVED, CANCELLED):
                return False
            self.result = result
            cancelled = result.error is not None and result.error.cls == "Cancelled"
            self.state = CANCELLED if cancelled else RESOLVED
        if self.events is not None:
            self.events.put(("done", self, None))
        return True

    def partial(self, record) -> None:
        if self.events is not None:
            self.events.put(("partial", self, record))

    @property
    def done(self) -> bool:
        return self.state in (RESOLVED, CANCELLED)


def _cancelled_result(spec):
    from .runtime import TaskResult, cancelled_error

    return TaskResult(spec.task_id, None, cancelled_error(spec.chunk.start + 1), [])


class Executor:
    capacity = 1
    poll_interval = 0.25

    def __init__(self, runtime=None):
        self.runtime = runtime
        self.closed = False

    def _stats(self, name: str) -> None:
        if self.runtime is not None:
            self.runtime.stats.bump(name)

    def submit(self, spec, events=None) -> FutureHandle:
        raise NotImplementedError

    def poll(self, handle: FutureHandle):
        """The TaskResult if the handle is done, else None (never blocks)."""
        return handle.result if handle.done else None

    def cancel(self, handle: FutureHandle) -> None:
        with handle.lock:
            handle.cancel_requested = True
            pending = handle.state == PENDING
        if pending:
            handle.finish(_cancelled_result(handle.spec))

    def watchdog(self, handles) -> None:
        pass

    def shutdown(self) -> None:
        self.closed = True

    def _check_open(self) -> None:
        if self.closed:
            raise BackendUnavailable("executor has been shut down")


class SequentialExecutor(Executor):
    """Runs each task inline in the controller."""

    def submit(self, spec, events=None) -> FutureHandle:
        from .runtime import run_task

        self._check_open()
        handle = FutureHandle(spec, events)
        handle.start()
        self._stats("started")
        result = run_task(spec, on_partial=handle.partial,
                          cancel_check=lambda: handle.cancel_requested, parent_runtime=self.runtime)
        self._stats("finished")
        handle.finish(result)
        return handle


class ThreadExecutor(Executor):
    poll_interval = 0.1

    def __init__(self, workers: int, runtime=None):
        super().__init__(runtime)
        self.capacity = workers
        self.pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="mmr-task")

    def submit(self, spec, events=None) -> FutureHandle:
        self._check_open()
        handle = FutureHandle(spec, events)
        self._stats("backend_tasks")
        self.pool.submit(self._run, handle)
        return handle

    def _run(self, handle: FutureHandle) -> None:
        from .runtime import TaskResult, run_task

        if not handle.start():
            return
        self._stats("started")
        try:
            result = run_task(handle.spec, on_partial=handle.partial,
                              cancel_check=lambda: handle.cancel_requested,
                              parent_runtime=self.runtime)
        except BaseException as exc:  # interpreter bug: surface it instead of hanging
            result = TaskResult(handle.task_id, None,
                                ErrorObject("InternalError", f"{type(exc).__name__}: {exc}",
                                            handle.spec.chunk.start + 1), [])
        self._stats("finished")
        handle.finish(result)

    def shutdown(self) -> None:
        super().shutdown()
        self.pool.shutdown(wait=False, cancel_futures=True)


def _worker_env() -> dict:
    env = dict(os.environ)
    src = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    parts = [src] + [p for p in env.get("PYTHONPATH", "").split(os.pathsep) if p]
    env["PYTHONPATH"] = os.pathsep.join(parts)
    return env


class _WorkerProcess:
    """One child process plus the thread reading its stdout."""

    def __init__(self, executor: "ProcessExecutor", slot: int):
        self.executor = executor
        self.slot = slot
        self.current: Optional[FutureHandle] = None
        self.dead_since: Optional[float] = None
        self.write_lock = threading.Lock()
        self.ready = threading.Event()
        try:
            self.proc = subprocess.Popen(
                [sys.executable, "-m", "mmr", "--worker"],
                stdin=subprocess.PIPE, stdout=subprocess.PIPE, env=_worker_env())
        except OSError as exc:
            raise BackendUnavailable(f"cannot start worker process: {exc}") from None
        self.send(wire.Hello())
        self.reader = threading.Thread(target=self._read_loop, daemon=True,
                                       name=f"mmr-worker-{slot}")
        self.reader.start()

    @property
    def pid(self) -> int:
        return self.proc.pid

    def alive(self) -> bool:
        return self.dead_since is None and self.proc.poll() is None

    def send(self, msg) -> bool:
        with self.write_lock:
            try:
                self.proc.stdin.write(wire.encode_message(msg))
                self.proc.stdin.flush()
                return True
            except (BrokenPipeError, OSError, ValueError):
                return False

    def _read_loop(self) -> None:
        from .runtime import TaskResult, record_from_value

        out = self.proc.stdout
        try:
            hello = wire.read_message(out)
            if not isinstance(hello, wire.Hello) or hello.version != wire.PROTOCOL_VERSION:
                raise DecodeError(f"unexpected handshake {hello!r}")
            self.ready.set()
            while True:
                msg = wire.read_message(out)
                if msg is None:
                    break
                handle = self.current
                if handle is None or getattr(msg, "task_id", None) != handle.task_id:
                    continue
                if isinstance(msg, wire.Partial):
                    handle.partial(record_from_value(msg.record))
                elif isinstance(msg, wire.Result):
                    result = TaskResult.from_value(msg.result)
                    self.current = None
                    self.executor._task_finished(self, handle, result)
        except (DecodeError, ValueError, KeyError, TypeError):
            pass
        self._died()
        self.ready.set()  # wake anyone waiting on start-up; alive() now reports False

    def _died(self) -> None:
        if self.dead_since is None:
            self.dead_since = time.monotonic()
        handle, self.current = self.current, None
        if handle is not None:
            self.executor._worker_died(self, handle)

    def kill(self) -> None:
        try:
            self.proc.kill()
        except OSError:
            pass

    def stop(self) -> None:
        self.send(wire.Shutdown())
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            self.kill()
            self.proc.wait()
        if self.proc.stdout is not None:
            self.proc.stdout.close()


class ProcessExecutor(Executor):
    """A pool of ``python -m mmr --worker`` child processes, one task each."""

    poll_interval = 0.1

    def __init__(self, workers: int, runtime=None):
        super().__init__(runtime)
        self.capacity = workers
        self.lock = threading.Lock()
        self.timeout = watchdog_timeout()
        self.slots: list[Optional[_WorkerProcess]] = [None] * workers
        for i in range(workers):
            self.slots[i] = _WorkerProcess(self, i)
        for w in self.slots:
            if not w.ready.wait(STARTUP_TIMEOUT_SECS) or not w.alive():
                self.shutdown()
                raise BackendUnavailable("worker process failed to start")

    @property
    def pids(self) -> list[int]:
        return [w.pid for w in self.slots if w is not None]

    def worker_for(self, handle: FutureHandle) -> Optional[_WorkerProcess]:
        for w in self.slots:
            if w is not None and w.current is handle:
                return w
        return None

    def _idle_worker(self) -> _WorkerProcess:
        with self.lock:
            for i, w in enumerate(self.slots):
                if w is not None and w.current is None and w.alive():
                    return w
            for i, w in enumerate(self.slots):
                if w is None or not w.alive():
                    if w is not None:
                        w.kill()
                    self.slots[i] = _WorkerProcess(self, i)
                    return self.slots[i]
        raise BackendUnavailable("no idle worker (more tasks in flight than workers)")

    def submit(self, spec, events=None) -> FutureHandle:
        self._check_open()
        handle = FutureHandle(spec, events)
        worker = self._idle_worker()
        worker.current = handle
        handle.start()
        self._stats("backend_tasks")
        self._stats("started")
        if not worker.send(wire.Task(spec.task_id, spec.to_value())):
            worker.current = None
            self._worker_died(worker, handle)
        return handle

    def _task_finished(self, worker, handle, result) -> None:
        self._stats("finished")
        handle.finish(result)

    def _worker_died(self, worker, handle) -> None:
        from .runtime import TaskResult

        if handle.cancel_requested:
            handle.finish(_cancelled_result(handle.spec))
            return
        start = handle.spec.chunk.start + 1
        err = ErrorObject("WorkerDied",
                          f"worker process {worker.pid} exited while running elements "
                          f"{start}..{handle.spec.chunk.end}", start)
        handle.finish(TaskResult(handle.task_id, None, err, []))

    def cancel(self, handle: FutureHandle) -> None:
        with handle.lock:
            if handle.done:
                return
            handle.cancel_requested = True
        worker = self.worker_for(handle)
        if worker is None:
            handle.finish(_cancelled_result(handle.spec))
            return
        worker.send(wire.Cancel(handle.task_id))

        def enforce():
            if not handle.done and worker.current is handle:
                worker.kill()

        timer = threading.Timer(CANCEL_GRACE_SECS, enforce)
        timer.daemon = True
        timer.start()

    def watchdog(self, handles) -> None:
        """Fail tasks whose worker is gone but whose pipe never reported EOF."""
        now = time.monotonic()
        for w in list(self.slots):
            if w is None or w.current is None:
                continue
            if w.proc.poll() is not None and w.dead_since is None:
                w.dead_since = now
            if w.dead_since is not None and now - w.dead_since >= self.timeout:
                handle, w.current = w.current, None
                if handle is not None:
                    self._worker_died(w, handle)

    def shutdown(self) -> None:
        super().shutdown()
        for w in self.slots:
            if w is not None:
                w.stop()
        self.slots = []


def make_executor(plan, runtime=None) -> Executor:
    if plan.kind == "sequential":
        return SequentialExecutor(runtime)
    if plan.kind == "threads":
        return ThreadExecutor(plan.workers, runtime)
    if plan.kind == "processes":
        return ProcessExecutor(plan.workers, runtime)
    raise BackendUnavailable(f"no executor for plan kind '{plan.kind}'")
