import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trace:
    """
    Record of one best-response run.

    Attributes:
        schedule_kind (str): Activation schedule name ("rr", "rand" or "replay").
        seed (int | None): Seed of the random schedule, if any.
        schedule (tuple[int, ...]): Players actually activated, one per step.
        profiles (tuple[int, ...]): Profile indices, starting profile first (len = steps + 1).
        converged (bool): True when the last profile is a fixed point of every transition.
        absorbing (int | None): Last profile when converged.
        potential_series (tuple[float, ...] | None): Value of the supplied per-profile table
            along the run, aligned with `profiles`.
    """

    schedule_kind: str
    seed: Optional[int]
    schedule: tuple
    profiles: tuple
    converged: bool
    absorbing: Optional[int]
    potential_series: Optional[tuple] = None

    @property
    def start(self) -> int:
        return self.profiles[0]

    @property
    def steps(self) -> int:
        return len(self.schedule)


class ProfileDynamicsSimulator:
    """
    Base class for one-player-at-a-time profile dynamics over transition maps.

    At every step a single player is activated and the profile moves along that
    player's transition map. The run stops as soon as the profile is a fixed point
    of every player's map, when the schedule is exhausted, or after `max_steps` steps.

    Attributes:
        next_profile (np.ndarray): Array (n, l); entry [i-1, k-1] is the 1-based profile
            reached from profile k when player i moves.
        values (np.ndarray | None): Optional per-profile values (potential or criterion)
            recorded along the run.
        max_steps (int): Step budget.
        results (list): One record per executed step.
    """

    schedule_kind = "base"

    def __init__(
        self,
        transitions: Sequence,
        values: Optional[Sequence[float]] = None,
        max_steps: Optional[int] = None,
        **kwargs,
    ):
        """
        Initialize the simulator with per-player transition maps.

        Args:
            transitions (Sequence[TransitionMap]): One map per player, ordered by player.
            values (Sequence[float], optional): Per-profile values to record.
            max_steps (int, optional): Step budget; defaults to 100 * l.
            **kwargs: Ignored keyword arguments (e.g. a seed for schedules without randomness).
        """
        if not transitions:
            raise ValueError("At least one transition map is required")
        self.next_profile = np.vstack([np.asarray(t.next, dtype=np.int64) for t in transitions])
        self.n_players, self.n_profiles = self.next_profile.shape
        self.values = None if values is None else np.asarray(values, dtype=float)
        if self.values is not None and self.values.size != self.n_profiles:
            raise ValueError(f"Expected {self.n_profiles} values, got {self.values.size}")
        self.max_steps = 100 * self.n_profiles if max_steps is None else int(max_steps)
        if self.max_steps < 0:
            raise ValueError(f"max_steps must be non-negative, got {self.max_steps}")
        self.seed = None
        self.results = []

    def reset(self):
        """Clear the results of a previous run."""
        self.results = []

    def select_player(self, step: int, profile: int) -> Optional[int]:
        """
        Abstract method choosing the player activated at `step`.

        Args:
            step (int): 1-based step number.
            profile (int): Current profile index.

        Returns:
            int | None: 1-based player, or None to stop the run.

        Raises:
            NotImplementedError: Must be implemented in subclasses.
        """
        raise NotImplementedError

    def is_absorbing(self, profile: int) -> bool:
        return bool(np.all(self.next_profile[:, profile - 1] == profile))

    def _value(self, profile: int) -> Optional[float]:
        return None if self.values is None else float(self.values[profile - 1])

    def run_simulation(self, x0: int) -> Trace:
        """
        Run the dynamics from profile `x0`.

        Args:
            x0 (int): 1-based starting profile.

        Returns:
            Trace: Activated players, visited profiles and convergence status.
        """
        if not 1 <= x0 <= self.n_profiles:
            raise ValueError(f"Start profile {x0} outside 1..{self.n_profiles}")
        self.reset()
        profile = int(x0)
        schedule, profiles = [], [profile]

        while not self.is_absorbing(profile) and len(schedule) < self.max_steps:
            step = len(schedule) + 1
            player = self.select_player(step, profile)
            if player is None:
                break
            profile = int(self.next_profile[player - 1, profile - 1])
            schedule.append(int(player))
            profiles.append(profile)
            self.results.append(
                {"step": step, "player": int(player), "profile": profile, "value": self._value(profile)}
            )

        converged = self.is_absorbing(profile)
        if converged:
            logger.debug(f"Run from {x0} absorbed at profile {profile} after {len(schedule)} steps")
        else:
            logger.warning(f"Run from {x0} did not reach a fixed point within {len(schedule)} steps")

        series = None
        if self.values is not None:
            series = tuple(float(self.values[k - 1]) for k in profiles)
        return Trace(
            schedule_kind=self.schedule_kind,
            seed=self.seed,
            schedule=tuple(schedule),
            profiles=tuple(profiles),
            converged=converged,
            absorbing=profile if converged else None,
            potential_series=series,
        )

    def to_dataframe(self) -> pd.DataFrame:
        """
        Convert the step records of the last run to a pandas DataFrame.

        Returns:
            pd.DataFrame: Columns step, player, profile, value.
        """
        return pd.DataFrame(self.results, columns=["step", "player", "profile", "value"])
