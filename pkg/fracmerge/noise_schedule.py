
from dataclasses import dataclass, field

import numpy as np

from fracmerge.domain_error import DomainError

NUM_TIMESTEPS = 1000
KNOT = 700
ALPHA_BAR_KNOT = 0.7
ALPHA_BAR_FINAL = 1e-4


@dataclass(frozen=True)
class NoiseSchedule:
    """Piecewise-quadratic cumulative signal schedule.

    On [0, m] the schedule is 1 - a (t/m)^2, with a chosen so that it reaches
    `alpha_bar_knot` at the knot. On (m, T] it is the quadratic Bezier curve
    in s = (t - m) / (T - m) that starts at the knot with the same slope and
    ends at `alpha_bar_final`, which keeps it C1 at the knot and strictly
    decreasing. Most of the change happens after the knot, leaving a long
    low-noise stretch for fine alignment.
    """

    num_timesteps: int = NUM_TIMESTEPS
    knot: int = KNOT
    alpha_bar_knot: float = ALPHA_BAR_KNOT
    alpha_bar_final: float = ALPHA_BAR_FINAL
    alpha_bar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.knot < self.num_timesteps:
            raise DomainError(
                f"Knot {self.knot} must lie inside (0, {self.num_timesteps})")
        if not 0 < self.alpha_bar_final < self.alpha_bar_knot < 1:
            raise DomainError(
                "Expected 0 < alpha_bar_final < alpha_bar_knot < 1, got " +
                f"{self.alpha_bar_final} and {self.alpha_bar_knot}")
        control = self._middle_control_point()
        if not self.alpha_bar_final < control < self.alpha_bar_knot:
            raise DomainError(
                "Knot slope too steep for a monotone tail; lower the knot " +
                "value or move the knot later")
        t = np.arange(self.num_timesteps + 1, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", self._curve(t, control))

    @property
    def head_coefficient(self) -> float:
        return 1.0 - self.alpha_bar_knot

    def _middle_control_point(self) -> float:
        slope = -2.0 * self.head_coefficient / self.knot
        tail = self.num_timesteps - self.knot
        return self.alpha_bar_knot + 0.5 * slope * tail

    def _curve(self, t: np.ndarray, control: float) -> np.ndarray:
        head = 1.0 - self.head_coefficient * (t / self.knot) ** 2
        s = np.clip((t - self.knot) / (self.num_timesteps - self.knot),
                    0.0, 1.0)
        tail = (self.alpha_bar_knot * (1 - s) ** 2 +
                control * 2 * s * (1 - s) + self.alpha_bar_final * s ** 2)
        return np.where(t <= self.knot, head, tail)

    def alpha_bar_at(self, t: int) -> float:
        """The cumulative signal coefficient at integer timestep t.

        Raises
        ------
        DomainError
            If t is outside [0, T].
        """
        if not 0 <= t <= self.num_timesteps:
            raise DomainError(
                f"Timestep {t} outside [0, {self.num_timesteps}]")
        return float(self.alpha_bar[int(t)])

    def sampling_timesteps(self, steps: int) -> np.ndarray:
        """Descending timesteps T = tau_0 > ... > tau_steps = 0 used by the
        subsampled reverse process."""
        if steps <= 0:
            raise DomainError(f"Sampling steps must be positive, got {steps}")
        steps = min(steps, self.num_timesteps)
        ladder = np.round(np.linspace(self.num_timesteps, 0, steps + 1))
        return ladder.astype(np.int64)


def schedule_alpha_bar(t: int, schedule: NoiseSchedule = NoiseSchedule()
                       ) -> float:
    return schedule.alpha_bar_at(t)
