from typing import Optional, Sequence

import numpy as np

from models.base_simulator import ProfileDynamicsSimulator


class RoundRobinSimulator(ProfileDynamicsSimulator):
    """Activates players 1, 2, ..., n, 1, 2, ... in turn."""

    schedule_kind = "rr"

    def select_player(self, step: int, profile: int) -> int:
        return (step - 1) % self.n_players + 1


class RandomActivationSimulator(ProfileDynamicsSimulator):
    """
    Activates a uniformly random player at every step.

    The generator only decides the schedule; the recorded schedule in the trace is
    what makes a run reproducible.

    Attributes:
        seed (int | None): Seed of the numpy generator.
    """

    schedule_kind = "rand"

    def __init__(self, transitions, values=None, max_steps=None, seed: Optional[int] = None, **kwargs):
        """
        Initialize the simulator with a seeded generator.

        Args:
            transitions (Sequence[TransitionMap]): One map per player.
            values (Sequence[float], optional): Per-profile values to record.
            max_steps (int, optional): Step budget.
            seed (int, optional): Generator seed.
            **kwargs: Ignored keyword arguments shared with other schedules.
        """
        super().__init__(transitions, values=values, max_steps=max_steps)
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self):
        super().reset()
        self.rng = np.random.default_rng(self.seed)

    def select_player(self, step: int, profile: int) -> int:
        return int(self.rng.integers(1, self.n_players + 1))


class ReplaySimulator(ProfileDynamicsSimulator):
    """Re-runs a recorded activation schedule; the run ends when the schedule is exhausted."""

    schedule_kind = "replay"

    def __init__(self, transitions, schedule: Sequence[int], values=None, max_steps=None, **kwargs):
        schedule = [int(p) for p in schedule]
        super().__init__(transitions, values=values, max_steps=len(schedule) if max_steps is None else max_steps)
        bad = [p for p in schedule if not 1 <= p <= self.n_players]
        if bad:
            raise ValueError(f"Recorded schedule activates unknown players {sorted(set(bad))}")
        self.schedule = schedule

    def select_player(self, step: int, profile: int) -> Optional[int]:
        if step > len(self.schedule):
            return None
        return self.schedule[step - 1]
