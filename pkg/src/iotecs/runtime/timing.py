"""Wall-clock step alignment, pacing sleeps and CPU busy-work."""

from __future__ import annotations

import time

_SPIN_NS = 200_000  # final stretch of a sub-millisecond pause is spun, not slept
_OS_SLEEP_MIN_NS = 1_000_000


def sleep_until(deadline_ns: int) -> None:
    """Block until ``time.monotonic_ns() >= deadline_ns``.

    Pauses of a millisecond or more use the OS sleep directly; shorter ones
    sleep most of the way and spin the rest to stay accurate.
    """
    remaining = deadline_ns - time.monotonic_ns()
    if remaining <= 0:
        return
    if remaining >= _OS_SLEEP_MIN_NS:
        time.sleep(remaining / 1e9)
        remaining = deadline_ns - time.monotonic_ns()
        if remaining <= 0:
            return
    if remaining > _SPIN_NS:
        time.sleep((remaining - _SPIN_NS) / 1e9)
    while time.monotonic_ns() < deadline_ns:
        pass


def busy_compute(duration_ns: int) -> int:
    """Spin on floating-point arithmetic for at least *duration_ns*.

    Never sleeps. Returns the elapsed nanoseconds actually spent.
    """
    start = time.monotonic_ns()
    if duration_ns <= 0:
        return time.monotonic_ns() - start
    deadline = start + duration_ns
    x = 1.0001
    acc = 0.0
    now = start
    while now < deadline:
        for _ in range(32):
            acc = acc * 0.999 + x * x
            x = x * 1.0000001 + 1e-9
        now = time.monotonic_ns()
    return now - start


class StepClock:
    """Step boundaries anchored to a shared run epoch.

    The epoch is given in wall-clock nanoseconds so that separate processes
    agree on it; waiting is done on the monotonic clock. Step ``i`` begins at
    ``epoch + i * step_ns`` no matter how long earlier steps took, so lateness
    never accumulates.
    """

    def __init__(self, epoch_wall_ns: int, step_ns: int, step_count: int) -> None:
        self.epoch_wall_ns = epoch_wall_ns
        self.step_ns = step_ns
        self.step_count = step_count
        self.epoch_mono_ns = time.monotonic_ns() + (epoch_wall_ns - time.time_ns())
        self._last = -1
        self.max_late_ns = 0

    def step_start_mono(self, i: int) -> int:
        return self.epoch_mono_ns + i * self.step_ns

    def wall_from_mono(self, mono_ns: int) -> int:
        return self.epoch_wall_ns + (mono_ns - self.epoch_mono_ns)

    def wait_for_step(self, i: int) -> int:
        """Return (as wall-clock ns) once step *i* has started.

        Raises ``ValueError`` when steps are requested out of order or past
        the end of the run.
        """
        if i <= self._last:
            raise ValueError(f"step {i} requested after step {self._last}")
        if not 0 <= i < self.step_count:
            raise ValueError(f"step {i} outside run of {self.step_count} steps")
        self._last = i
        target = self.step_start_mono(i)
        sleep_until(target)
        now = time.monotonic_ns()
        self.max_late_ns = max(self.max_late_ns, now - target)
        return self.wall_from_mono(now)
