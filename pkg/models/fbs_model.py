import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class ModelError(ValueError):
    """Raised when a facility-based system or one of its indices is invalid."""


@dataclass(frozen=True)
class Profile:
    """
    One action choice per player.

    Attributes:
        choices (tuple[int, ...]): 1-based action index of each player.
        index (int): 1-based canonical rank of the profile (player 1 most significant).
    """

    choices: tuple
    index: int

    def label(self) -> str:
        return " ".join(str(c) for c in self.choices)


@dataclass(frozen=True)
class FbsModel:
    """
    Facility-based system: players choosing subsets of shared facilities.

    Attributes:
        n_players (int): Number of players n (>= 1).
        n_facilities (int): Number of facilities m (>= 1).
        actions (tuple): For each player an ordered tuple of actions, each action a
            sorted tuple of 1-based facility indices.
        perf (tuple[float, ...] | None): Optional performance criterion P, one value
            per profile in canonical order.
    """

    n_players: int
    n_facilities: int
    actions: tuple
    perf: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.n_players < 1 or self.n_facilities < 1:
            raise ModelError(
                f"Need at least one player and one facility, got n={self.n_players}, m={self.n_facilities}"
            )
        if len(self.actions) != self.n_players:
            raise ModelError(
                f"Expected action sets for {self.n_players} players, got {len(self.actions)}"
            )
        normalized = []
        for i, action_set in enumerate(self.actions, start=1):
            if len(action_set) == 0:
                raise ModelError(f"Player {i} has an empty action set")
            normalized_set = []
            for action in action_set:
                facilities = tuple(sorted(set(int(j) for j in action)))
                bad = [j for j in facilities if not 1 <= j <= self.n_facilities]
                if bad:
                    raise ModelError(
                        f"Player {i} uses facilities {bad} outside 1..{self.n_facilities}"
                    )
                normalized_set.append(facilities)
            normalized.append(tuple(normalized_set))
        object.__setattr__(self, "actions", tuple(normalized))

        if self.perf is not None:
            perf = tuple(float(v) for v in self.perf)
            if len(perf) != self.n_profiles:
                raise ModelError(
                    f"Performance table has {len(perf)} entries, expected {self.n_profiles}"
                )
            if not np.all(np.isfinite(perf)):
                raise ModelError("Performance table contains non-finite values")
            object.__setattr__(self, "perf", perf)

    @classmethod
    def from_actions(
        cls,
        actions: Sequence[Sequence[Sequence[int]]],
        n_facilities: Optional[int] = None,
        perf: Optional[Sequence[float]] = None,
    ) -> "FbsModel":
        """
        Build a model from nested action lists, inferring m when not given.

        Args:
            actions: Per player, a list of actions, each a list of 1-based facility indices.
            n_facilities (int, optional): Facility count; defaults to the largest index used.
            perf (Sequence[float], optional): Performance values in canonical order.

        Returns:
            FbsModel: The validated model.
        """
        if n_facilities is None:
            used = [j for action_set in actions for action in action_set for j in action]
            n_facilities = max(used) if used else 1
        model = cls(
            n_players=len(actions),
            n_facilities=n_facilities,
            actions=tuple(tuple(tuple(a) for a in action_set) for action_set in actions),
            perf=None if perf is None else tuple(perf),
        )
        model.log_warnings()
        return model

    def with_perf(self, perf: Optional[Sequence[float]]) -> "FbsModel":
        return FbsModel(self.n_players, self.n_facilities, self.actions, perf=perf)

    def log_warnings(self):
        for warning in self.warnings:
            logger.warning(warning)

    @property
    def warnings(self) -> list:
        """Non-fatal modelling issues, currently duplicate actions within one action set."""
        found = []
        for i, action_set in enumerate(self.actions, start=1):
            seen = {}
            for a, action in enumerate(action_set, start=1):
                if action in seen:
                    found.append(
                        f"Player {i}: action {a} duplicates action {seen[action]} "
                        f"(facilities {list(action)}); ties resolve to the lower index"
                    )
                else:
                    seen[action] = a
        return found

    @property
    def sizes(self) -> tuple:
        return tuple(len(action_set) for action_set in self.actions)

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64))

    @cached_property
    def strides(self) -> np.ndarray:
        """Mixed-radix place values: stride of player i is the product of |A^j| for j > i."""
        sizes = np.array(self.sizes, dtype=np.int64)
        return np.concatenate([np.cumprod(sizes[::-1])[::-1][1:], [1]]).astype(np.int64)

    @cached_property
    def choice_matrix(self) -> np.ndarray:
        """Array (l, n) of 1-based action choices, row k-1 holding profile k."""
        grid = itertools.product(*(range(1, s + 1) for s in self.sizes))
        return np.array(list(grid), dtype=np.int64).reshape(self.n_profiles, self.n_players)

    @cached_property
    def incidence_tables(self) -> tuple:
        """Per player an array (|A^i|, m) whose rows are the action incidence vectors."""
        tables = []
        for action_set in self.actions:
            table = np.zeros((len(action_set), self.n_facilities), dtype=np.int64)
            for a, action in enumerate(action_set):
                table[a, [j - 1 for j in action]] = 1
            tables.append(table)
        return tuple(tables)

    @cached_property
    def load_matrix(self) -> np.ndarray:
        """Array (l, m) of facility loads r(a), row k-1 holding profile k."""
        loads = np.zeros((self.n_profiles, self.n_facilities), dtype=np.int64)
        for i, table in enumerate(self.incidence_tables):
            loads += table[self.choice_matrix[:, i] - 1]
        return loads

    @cached_property
    def b_matrix(self) -> np.ndarray:
        """Stacked B-rows, shape (l, m*n), columns ordered [facility 1 usage 1..n, ...]."""
        usage = np.arange(1, self.n_players + 1)
        blocks = usage[None, None, :] <= self.load_matrix[:, :, None]
        return blocks.reshape(self.n_profiles, self.n_facilities * self.n_players).astype(np.int64)

    def check_player(self, player: int) -> None:
        if not 1 <= player <= self.n_players:
            raise ModelError(f"Player {player} outside 1..{self.n_players}")

    def check_action(self, player: int, action: int) -> None:
        self.check_player(player)
        if not 1 <= action <= self.sizes[player - 1]:
            raise ModelError(
                f"Action {action} outside 1..{self.sizes[player - 1]} for player {player}"
            )

    def check_index(self, index: int) -> None:
        if not 1 <= index <= self.n_profiles:
            raise ModelError(f"Profile index {index} outside 1..{self.n_profiles}")


def rank_profile(model: FbsModel, choices: Sequence[int]) -> int:
    """
    Canonical 1-based rank of a choice tuple.

    Args:
        model (FbsModel): The system.
        choices (Sequence[int]): 1-based action index per player.

    Returns:
        int: 1 + sum_i (choices[i] - 1) * stride_i.
    """
    if len(choices) != model.n_players:
        raise ModelError(f"Expected {model.n_players} choices, got {len(choices)}")
    for i, c in enumerate(choices, start=1):
        model.check_action(i, int(c))
    offsets = np.asarray(choices, dtype=np.int64) - 1
    return int(1 + offsets @ model.strides)


def unrank_profile(model: FbsModel, index: int) -> Profile:
    model.check_index(index)
    choices = tuple(int(c) for c in model.choice_matrix[index - 1])
    return Profile(choices=choices, index=int(index))


def enumerate_profiles(model: FbsModel) -> list:
    """All profiles in canonical mixed-radix order; position k-1 holds index k."""
    return [
        Profile(choices=tuple(int(c) for c in row), index=k)
        for k, row in enumerate(model.choice_matrix, start=1)
    ]


def deviate(model: FbsModel, index: int, player: int, action: int) -> int:
    """Index of the profile reached when `player` switches to `action` at profile `index`."""
    current = int(model.choice_matrix[index - 1, player - 1])
    return int(index + (action - current) * model.strides[player - 1])


def incidence_vector(model: FbsModel, player: int, action: int) -> np.ndarray:
    """Length-m 0/1 vector whose entry s is 1 iff facility s+1 belongs to the action."""
    model.check_action(player, action)
    return model.incidence_tables[player - 1][action - 1].copy()


def load_vector(model: FbsModel, p: Profile) -> np.ndarray:
    model.check_index(p.index)
    return model.load_matrix[p.index - 1].copy()


def b_row(model: FbsModel, p: Profile) -> np.ndarray:
    """
    Unary encoding of the loads at a profile.

    Block j (length n) holds r_j ones followed by n - r_j zeros.

    Args:
        model (FbsModel): The system.
        p (Profile): Profile to encode.

    Returns:
        np.ndarray: Length m*n 0/1 vector.
    """
    model.check_index(p.index)
    return model.b_matrix[p.index - 1].copy()
