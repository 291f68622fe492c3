import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from models.activation import RandomActivationSimulator, ReplaySimulator, RoundRobinSimulator
from models.base_simulator import Trace
from models.congestion import PerfTable, check_payoff_source, default_tie_tol, deviation_targets
from models.fbs_model import FbsModel

logger = logging.getLogger(__name__)

# Registered activation schedules
SCHEDULES = {
    "rr": RoundRobinSimulator,
    "rand": RandomActivationSimulator,
}


@dataclass(frozen=True, eq=False)
class BestResponseMap:
    """
    Myopic best responses of one player at every profile.

    Attributes:
        player (int): 1-based player index.
        choice (np.ndarray): Length-l vector of selected actions (incumbent kept on ties,
            otherwise the smallest minimizing action).
        argmin_sets (tuple[frozenset[int], ...]): Minimizing actions at every profile.
    """

    player: int
    choice: np.ndarray
    argmin_sets: tuple


@dataclass(frozen=True, eq=False)
class TransitionMap:
    """
    Profile-index form of a best-response map: profile k moves to next[k-1].

    Written as a logical matrix this is delta_l[next[0], ..., next[l-1]].
    """

    player: int
    next: np.ndarray

    def as_logical_matrix(self) -> np.ndarray:
        """Dense (l, l) 0/1 matrix whose column k-1 is the unit vector of next[k-1]."""
        size = self.next.size
        matrix = np.zeros((size, size), dtype=np.int64)
        matrix[self.next - 1, np.arange(size)] = 1
        return matrix


@dataclass(frozen=True)
class Disagreement:
    player: int
    profile: int
    left: object
    right: object


@dataclass(frozen=True)
class EquivalenceReport:
    """
    Comparison of two families of best-response maps.

    Attributes:
        equivalent (bool): True when no disagreement was found.
        mode (str): "strict" (argmin sets) or "selected" (tie-broken choices).
        witnesses (list[Disagreement]): Every (player, profile) where the maps differ.
    """

    equivalent: bool
    mode: str
    witnesses: list = field(default_factory=list)


@dataclass(frozen=True)
class NearOptimalityReport:
    """
    Gap between the criterion at an absorbing profile and its minimum.

    Attributes:
        absorbing (int): Profile index checked.
        value (float): Criterion at the absorbing profile.
        minimum (float): Smallest criterion value.
        gap (float): |value - minimum|.
        deviation (float): ||perf - p0||_inf.
        epsilon (float): Supplied epsilon (> deviation).
        bound (float): 2 * epsilon.
        holds (bool): gap < bound.
    """

    absorbing: int
    value: float
    minimum: float
    gap: float
    deviation: float
    epsilon: float
    bound: float
    holds: bool


def best_response_map(
    model: FbsModel, payoffs: np.ndarray, player: int, tie_tol: Optional[float] = None
) -> BestResponseMap:
    """
    Argmin of the player's cost over its actions, others held fixed, at every profile.

    Args:
        model (FbsModel): The system.
        payoffs (np.ndarray): Payoff source, array (l, n) of costs.
        player (int): 1-based player index.
        tie_tol (float, optional): Argmin membership tolerance; defaults to
            1e-9 * (1 + payoff scale).

    Returns:
        BestResponseMap: Selected actions and argmin sets.
    """
    payoffs = check_payoff_source(model, payoffs)
    model.check_player(player)
    if tie_tol is None:
        tie_tol = default_tie_tol(payoffs)

    costs = payoffs[deviation_targets(model, player), player - 1]
    members = costs <= costs.min(axis=1)[:, None] + tie_tol
    incumbent = model.choice_matrix[:, player - 1]
    keeps = members[np.arange(model.n_profiles), incumbent - 1]
    choice = np.where(keeps, incumbent, members.argmax(axis=1) + 1)
    argmin_sets = tuple(frozenset(int(a) + 1 for a in np.flatnonzero(row)) for row in members)
    return BestResponseMap(player=player, choice=choice.astype(np.int64), argmin_sets=argmin_sets)


def best_response_maps(model: FbsModel, payoffs: np.ndarray, tie_tol: Optional[float] = None) -> list:
    """Best-response maps of all players with one shared tie tolerance."""
    payoffs = check_payoff_source(model, payoffs)
    if tie_tol is None:
        tie_tol = default_tie_tol(payoffs)
    return [best_response_map(model, payoffs, i, tie_tol) for i in range(1, model.n_players + 1)]


def transition_map(brm: BestResponseMap, model: FbsModel) -> TransitionMap:
    """Replace the owner's coordinate of every profile by its selected action."""
    current = model.choice_matrix[:, brm.player - 1]
    indices = np.arange(1, model.n_profiles + 1)
    nxt = indices + (brm.choice - current) * model.strides[brm.player - 1]
    return TransitionMap(player=brm.player, next=nxt.astype(np.int64))


def transition_maps(maps: Sequence[BestResponseMap], model: FbsModel) -> list:
    return [transition_map(brm, model) for brm in maps]


def fixed_points(model: FbsModel, maps: Sequence[BestResponseMap]) -> set:
    """
    Profiles where every player's current action is among its best responses.

    Args:
        model (FbsModel): The system.
        maps (Sequence[BestResponseMap]): One map per player.

    Returns:
        set[int]: 1-based profile indices.
    """
    stable = np.ones(model.n_profiles, dtype=bool)
    for brm in maps:
        incumbent = model.choice_matrix[:, brm.player - 1]
        stable &= np.array([int(a) in s for a, s in zip(incumbent, brm.argmin_sets)])
    return {int(k) + 1 for k in np.flatnonzero(stable)}


def simulate(
    maps: Sequence[TransitionMap],
    schedule_kind: str = "rand",
    x0: int = 1,
    max_steps: Optional[int] = None,
    seed: Optional[int] = None,
    values: Optional[Sequence[float]] = None,
) -> Trace:
    """
    Run best-response dynamics with one activated player per step.

    Args:
        maps (Sequence[TransitionMap]): One transition map per player.
        schedule_kind (str): "rr" (round-robin) or "rand" (uniform random, seeded).
        x0 (int): 1-based starting profile.
        max_steps (int, optional): Step budget (>= 1); defaults to 100 * l.
        seed (int, optional): Seed of the random schedule.
        values (Sequence[float], optional): Per-profile potential to record along the run.

    Returns:
        Trace: Replayable record of the run. Non-convergence is reported, not raised.
    """
    if schedule_kind not in SCHEDULES:
        raise ValueError(f"Unknown schedule {schedule_kind!r}; choose from {sorted(SCHEDULES)}")
    if max_steps is not None and max_steps < 1:
        raise ValueError(f"max_steps must be at least 1, got {max_steps}")
    simulator_cls = SCHEDULES[schedule_kind]
    simulator = simulator_cls(maps, values=values, max_steps=max_steps, seed=seed)
    trace = simulator.run_simulation(x0)
    logger.debug(
        f"{schedule_kind} run from {x0}: {trace.steps} steps, "
        f"{'absorbed at ' + str(trace.absorbing) if trace.converged else 'not converged'}"
    )
    return trace


def replay(
    maps: Sequence[TransitionMap],
    schedule: Sequence[int],
    x0: int,
    values: Optional[Sequence[float]] = None,
) -> Trace:
    """Re-run a recorded activation schedule from `x0`."""
    return ReplaySimulator(maps, schedule=schedule, values=values).run_simulation(x0)


def dynamic_equivalence(
    maps_a: Sequence[BestResponseMap], maps_b: Sequence[BestResponseMap], mode: str = "strict"
) -> EquivalenceReport:
    """
    Check whether two games induce the same best-response dynamics.

    Args:
        maps_a (Sequence[BestResponseMap]): Maps of the first game.
        maps_b (Sequence[BestResponseMap]): Maps of the second game, same model.
        mode (str): "strict" compares argmin sets, "selected" compares tie-broken choices.

    Returns:
        EquivalenceReport: Verdict and every disagreement witness.
    """
    if mode not in ("strict", "selected"):
        raise ValueError(f"Unknown equivalence mode {mode!r}")
    if len(maps_a) != len(maps_b) or any(a.choice.size != b.choice.size for a, b in zip(maps_a, maps_b)):
        raise ValueError("Maps describe different models")

    witnesses = []
    for a, b in zip(maps_a, maps_b):
        if mode == "strict":
            for k, (left, right) in enumerate(zip(a.argmin_sets, b.argmin_sets), start=1):
                if left != right:
                    witnesses.append(Disagreement(a.player, k, sorted(left), sorted(right)))
        else:
            for k in np.flatnonzero(a.choice != b.choice):
                witnesses.append(Disagreement(a.player, int(k) + 1, int(a.choice[k]), int(b.choice[k])))

    if witnesses:
        logger.info(f"Dynamics differ ({mode}): {len(witnesses)} disagreements")
    return EquivalenceReport(equivalent=not witnesses, mode=mode, witnesses=witnesses)


def near_optimality_check(perf: PerfTable, p0: PerfTable, absorbing: int, epsilon: float) -> NearOptimalityReport:
    """
    Measure how far the absorbing profile is from minimizing the criterion.

    Args:
        perf (PerfTable): Criterion P.
        p0 (PerfTable): Potential of the closest congestion game.
        absorbing (int): 1-based absorbing profile (the unique equilibrium).
        epsilon (float): Must exceed ||perf - p0||_inf.

    Returns:
        NearOptimalityReport: Gap and whether it is below 2 * epsilon.

    Raises:
        ValueError: If epsilon does not exceed ||perf - p0||_inf.
    """
    if len(perf) != len(p0):
        raise ValueError(f"Tables differ in length: {len(perf)} vs {len(p0)}")
    if not 1 <= absorbing <= len(perf):
        raise ValueError(f"Absorbing profile {absorbing} outside 1..{len(perf)}")
    deviation = float(np.max(np.abs(perf.values - p0.values)))
    if not epsilon > deviation:
        raise ValueError(f"epsilon={epsilon:g} must exceed ||P - P0||_inf = {deviation:.6g}")

    value = float(perf.values[absorbing - 1])
    minimum = float(perf.values.min())
    gap = abs(value - minimum)
    return NearOptimalityReport(
        absorbing=absorbing,
        value=value,
        minimum=minimum,
        gap=gap,
        deviation=deviation,
        epsilon=float(epsilon),
        bound=2.0 * epsilon,
        holds=gap < 2.0 * epsilon,
    )
