"""Wall-clock and virtual-clock time sources.

Simulated experiments run on a virtual clock so latency assertions and
report files are exactly reproducible; live serving and the response-time
benchmark use the real clock.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_ms(self) -> float: ...

    def sleep_ms(self, ms: float) -> None: ...


class RealClock:
    """Monotonic wall clock, reporting milliseconds since construction."""

    def __init__(self) -> None:
        self._epoch = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._epoch) * 1000.0

    def sleep_ms(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


class VirtualClock:
    """Deterministic simulated clock; sleeping advances time instantly."""

    def __init__(self, start_ms: float = 0.0) -> None:
        self._now = start_ms

    def now_ms(self) -> float:
        return self._now

    def sleep_ms(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("cannot sleep a negative duration")
        self._now += ms

    def advance_to(self, t_ms: float) -> None:
        if t_ms < self._now:
            raise ValueError(f"cannot move virtual clock backwards ({t_ms} < {self._now})")
        self._now = t_ms
