"""Asynchronous all-reduce under a simulated clock.

A launch never advances the clock. ``wait`` moves the clock forward to the
handle's completion time and books the difference as stall. The link is a
single FIFO channel: a reduce launched while an earlier one is still on the
wire starts transferring when that one finishes.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .params import average


class CollectiveError(RuntimeError):
    """Protocol misuse: double wait, too many reduces in flight, bad payload."""


@dataclass
class Clock:
    now: float = 0.0

    def advance(self, dt):
        if dt < 0:
            raise ValueError(f"clock cannot run backwards (dt={dt})")
        self.now += dt
        return self.now


@dataclass(eq=False)
class ReduceHandle:
    id: int
    payload: list = field(repr=False)
    launch_time: float
    completion_time: float
    slot: str = "params"
    result: np.ndarray = field(default=None, repr=False)
    consumed: bool = False
    _future: object = field(default=None, repr=False)


class CollectiveEngine:
    """All-reduce engine for ``G`` workers.

    ``comm_model`` maps a payload size in bytes to seconds on the wire.
    ``payload_bytes`` overrides the size derived from the vectors, which
    lets a tiny simulated model stand in for a large real one.
    """

    def __init__(self, G, comm_model=None, payload_bytes=None, threaded=False,
                 max_in_flight=1):
        if G < 1:
            raise ValueError("G must be >= 1")
        self.G = G
        self.comm_model = comm_model or (lambda nbytes: 0.0)
        self.payload_bytes = payload_bytes
        self.max_in_flight = max_in_flight
        self.events = []
        self.total_stall = 0.0
        self.num_waits = 0
        self.num_blocking_waits = 0
        self._next_id = 0
        self._link_free_at = 0.0
        self._in_flight = {}
        self._pool = ThreadPoolExecutor(max_workers=1) if threaded else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _log(self, event, handle, t_sim, stall=0.0):
        self.events.append({"event": event, "handle_id": handle.id,
                            "t_sim": t_sim, "stall": stall})

    def launch_all_reduce(self, contributions, clock, slot="params"):
        if len(contributions) != self.G:
            raise CollectiveError(
                f"expected {self.G} contributions, got {len(contributions)}")
        payload = [np.array(c, dtype=np.float64) for c in contributions]
        for c in payload[1:]:
            if c.shape != payload[0].shape:
                raise CollectiveError("contribution dimensions differ")
        live = self._in_flight.setdefault(slot, [])
        if len(live) >= self.max_in_flight:
            raise CollectiveError(
                f"slot {slot!r} already has {len(live)} unconsumed reduce(s) in flight")
        nbytes = self.payload_bytes if self.payload_bytes is not None else payload[0].size * 8
        cost = self.comm_model(nbytes) if self.G > 1 else 0.0
        start = max(clock.now, self._link_free_at)
        done = start + cost
        self._link_free_at = done
        h = ReduceHandle(self._next_id, payload, clock.now, done, slot)
        self._next_id += 1
        if self._pool is not None:
            h._future = self._pool.submit(average, payload)
        live.append(h)
        self._log("launch", h, clock.now)
        return h

    def is_completed(self, handle, clock):
        if handle.consumed:
            raise CollectiveError(f"handle {handle.id} was already consumed")
        return clock.now >= handle.completion_time

    def wait(self, handle, clock):
        """Block until the reduce lands; return the exact average."""
        if handle.consumed:
            raise CollectiveError(f"handle {handle.id} waited twice")
        stall = max(0.0, handle.completion_time - clock.now)
        clock.now = max(clock.now, handle.completion_time)
        self.num_waits += 1
        if stall > 0:
            self.num_blocking_waits += 1
        self.total_stall += stall
        result = self._consume(handle)
        self._log("wait", handle, clock.now, stall)
        return result

    def take(self, handle, clock):
        """Consume a reduce that has already completed, without waiting."""
        if not self.is_completed(handle, clock):
            raise CollectiveError(f"handle {handle.id} is still in flight")
        return self._consume(handle)

    def _consume(self, handle):
        if handle._future is not None:
            handle.result = handle._future.result()
        else:
            handle.result = average(handle.payload)
        handle.consumed = True
        self._in_flight[handle.slot].remove(handle)
        self._log("complete", handle, handle.completion_time)
        return handle.result

    def in_flight(self, slot="params"):
        return list(self._in_flight.get(slot, []))

    def write_events(self, path):
        with open(path, "w") as fh:
            for e in self.events:
                fh.write(json.dumps(e) + "\n")

