"""Injectable millisecond clocks. All timing rules run against one of these."""

from __future__ import annotations

import threading
import time


class Clock:
    def now_ms(self) -> int:
        raise NotImplementedError


class MonotonicClock(Clock):
    """Wall-independent clock; origin is process start."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)


class ManualClock(Clock):
    """Test clock advanced explicitly. Thread-safe."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def advance(self, delta_ms: int) -> int:
        with self._lock:
            self._now += delta_ms
            return self._now

    def set(self, now_ms: int) -> None:
        with self._lock:
            if now_ms < self._now:
                raise ValueError("manual clock cannot move backwards")
            self._now = now_ms
