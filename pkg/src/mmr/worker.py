"""Worker-process main loop (``python -m mmr --worker``).

The controller talks to the worker over stdin/stdout.  File descriptor 1 is
re-pointed at stderr once the protocol stream has been duplicated, so stray
host-level prints can never corrupt a frame.
"""

from __future__ import annotations

import os
import queue
import sys
import threading

from .errors import DecodeError
from .values import ErrorObject
from . import wire


def _reader(inp, inbox: queue.Queue, cancelled: set) -> None:
    while True:
        try:
            body = wire.read_frame(inp)
        except DecodeError as exc:
            inbox.put(("fatal", 0, str(exc)))
            return
        if body is None:
            inbox.put(None)
            return
        try:
            msg = wire.decode_body(body)
        except DecodeError as exc:
            inbox.put(("bad", wire.peek_task_id(body) or 0, str(exc)))
            continue
        if isinstance(msg, wire.Cancel):
            cancelled.add(msg.task_id)
        elif isinstance(msg, wire.Shutdown):
            inbox.put(None)
            return
        elif isinstance(msg, wire.Task):
            inbox.put(("task", msg.task_id, msg.spec))
        else:
            inbox.put(("bad", getattr(msg, "task_id", 0), f"unexpected {type(msg).__name__} message"))


def _protocol_error(task_id: int, message: str) -> wire.Result:
    from .runtime import TaskResult

    err = ErrorObject("ProtocolError", message)
    return wire.Result(task_id, TaskResult(task_id, None, err, []).to_value())


def serve(inp, out) -> int:
    """Run the worker protocol on binary streams ``inp``/``out``."""
    from .runtime import TaskSpec, record_to_value, run_task

    try:
        hello = wire.read_message(inp)
    except DecodeError as exc:
        print(f"mmr worker: bad handshake: {exc}", file=sys.stderr)
        return 3
    if not isinstance(hello, wire.Hello) or hello.version != wire.PROTOCOL_VERSION:
        print(f"mmr worker: protocol mismatch (expected version {wire.PROTOCOL_VERSION}, "
              f"got {hello!r})", file=sys.stderr)
        return 3
    wire.write_message(out, wire.Hello())

    inbox: queue.Queue = queue.Queue()
    cancelled: set = set()
    threading.Thread(target=_reader, args=(inp, inbox, cancelled), daemon=True).start()
    while True:
        item = inbox.get()
        if item is None:
            return 0
        kind, task_id, payload = item
        if kind == "fatal":
            wire.write_message(out, _protocol_error(task_id, payload))
            return 1
        if kind == "bad":
            wire.write_message(out, _protocol_error(task_id, payload))
            continue
        try:
            spec = TaskSpec.from_value(payload)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            wire.write_message(out, _protocol_error(task_id, f"malformed task: {exc}"))
            continue

        def partial(rec, task_id=task_id):
            wire.write_message(out, wire.Partial(task_id, record_to_value(rec)))

        result = run_task(spec, on_partial=partial,
                          cancel_check=lambda task_id=task_id: task_id in cancelled)
        result.task_id = task_id
        wire.write_message(out, wire.Result(task_id, result.to_value()))
        cancelled.discard(task_id)


def main() -> int:
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))
    out = os.fdopen(os.dup(1), "wb")
    os.dup2(2, 1)
    code = serve(sys.stdin.buffer, out)
    out.flush()
    sys.stderr.flush()
    # skip interpreter teardown: the reader thread may still be blocked on stdin
    os._exit(code)
