import time


class WallClock:
    """Monotonic seconds for the HTTP runtime."""

    def now(self) -> float:
        return time.monotonic()


class VirtualClock:
    """Simulated seconds; only advances when the simulator says so."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance_to(self, t: float):
        if t < self._now:
            raise ValueError(f"Virtual time cannot move backwards ({t} < {self._now})")
        self._now = t
