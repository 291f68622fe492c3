import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from models.fbs_model import FbsModel, Profile, deviate, unrank_profile

logger = logging.getLogger(__name__)


class DimensionError(ValueError):
    """Raised when a cost matrix, performance table or payoff table does not fit the model."""


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """
    Facility-cost table: xi[j-1, k-1] is the cost of facility j when k players use it.

    Attributes:
        xi (np.ndarray): Array of shape (m, n), all entries finite.
    """

    xi: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.ndim != 2:
            raise DimensionError(f"Cost matrix must be 2-D (m x n), got shape {xi.shape}")
        if not np.all(np.isfinite(xi)):
            raise DimensionError("Cost matrix contains non-finite values")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def from_flat(cls, values: Sequence[float], n_facilities: int, n_players: int) -> "CostMatrix":
        """Build from the flattened form [xi_1(1..n), ..., xi_m(1..n)]."""
        values = np.asarray(values, dtype=float)
        if values.size != n_facilities * n_players:
            raise DimensionError(
                f"Flat cost vector has {values.size} entries, expected {n_facilities * n_players}"
            )
        return cls(values.reshape(n_facilities, n_players))

    @classmethod
    def zeros(cls, model: FbsModel) -> "CostMatrix":
        return cls(np.zeros((model.n_facilities, model.n_players)))

    @classmethod
    def from_cumulative(cls, cumulative: np.ndarray) -> "CostMatrix":
        """Inverse of `cumulative`: marginal costs xi_j(k) = P_j(k) - P_j(k-1), P_j(0) = 0."""
        cumulative = np.asarray(cumulative, dtype=float)
        return cls(np.diff(cumulative, axis=1, prepend=0.0))

    @property
    def shape(self) -> tuple:
        return self.xi.shape

    @property
    def flat(self) -> np.ndarray:
        return self.xi.reshape(-1).copy()

    def cumulative(self) -> np.ndarray:
        """Separated facility costs P_j(k) = sum of xi_j(1..k), shape (m, n)."""
        return np.cumsum(self.xi, axis=1)

    def check_model(self, model: FbsModel) -> None:
        expected = (model.n_facilities, model.n_players)
        if self.xi.shape != expected:
            raise DimensionError(f"Cost matrix shape {self.xi.shape} does not match (m, n) = {expected}")


@dataclass(frozen=True, eq=False)
class PerfTable:
    """Performance criterion P, one finite value per profile in canonical order."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise DimensionError("Performance table contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_model(cls, model: FbsModel) -> "PerfTable":
        if model.perf is None:
            raise DimensionError("Model carries no performance table")
        return cls(np.array(model.perf))

    def __len__(self) -> int:
        return self.values.size

    def check_model(self, model: FbsModel) -> None:
        if self.values.size != model.n_profiles:
            raise DimensionError(
                f"Performance table has {self.values.size} entries, expected {model.n_profiles}"
            )


@dataclass(frozen=True)
class PotentialReport:
    """
    Outcome of checking that a performance table is the potential of a cost matrix.

    Attributes:
        passed (bool): True when every violation is within tolerance.
        worst_violation (float): Largest absolute violation found.
        kind (str): "potential" (P differs from the potential) or "deviation"
            (a unilateral payoff change differs from the P change); None if nothing was checked.
        profile (int | None): Witness profile index.
        player (int | None): Deviating player for deviation witnesses.
        action (int | None): Alternative action for deviation witnesses.
        tol (float): Tolerance used.
    """

    passed: bool
    worst_violation: float
    kind: Optional[str]
    profile: Optional[int]
    player: Optional[int]
    action: Optional[int]
    tol: float

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status}: worst violation {self.worst_violation:.6g} (tol {self.tol:g})"
        if self.kind == "potential":
            text += f", potential mismatch at profile {self.profile}"
        elif self.kind == "deviation":
            text += (
                f", deviation mismatch at profile {self.profile} "
                f"(player {self.player} -> action {self.action})"
            )
        return text


def _facility_costs_at_load(model: FbsModel, xi: CostMatrix) -> np.ndarray:
    """Array (l, m): xi_j(r_j(a)), zero where r_j(a) = 0."""
    loads = model.load_matrix
    facilities = np.arange(model.n_facilities)[None, :]
    costs = xi.xi[facilities, np.clip(loads - 1, 0, None)]
    return np.where(loads > 0, costs, 0.0)


def payoff(model: FbsModel, xi: CostMatrix, p: Profile, player: int) -> float:
    """
    Cost paid by `player` at profile `p`: sum of xi_j(r_j(p)) over the player's facilities.

    Args:
        model (FbsModel): The system.
        xi (CostMatrix): Facility costs.
        p (Profile): Profile to evaluate.
        player (int): 1-based player index.

    Returns:
        float: The player's cost (lower is better).
    """
    xi.check_model(model)
    model.check_player(player)
    model.check_index(p.index)
    loads = model.load_matrix[p.index - 1]
    action = model.actions[player - 1][p.choices[player - 1] - 1]
    total = 0.0
    for j in action:
        total += xi.xi[j - 1, loads[j - 1] - 1]
    return float(total)


def potential(model: FbsModel, xi: CostMatrix, p: Profile) -> float:
    """Potential at `p`, summed facility-major then usage-count-minor."""
    xi.check_model(model)
    model.check_index(p.index)
    loads = model.load_matrix[p.index - 1]
    total = 0.0
    for j in range(model.n_facilities):
        for k in range(loads[j]):
            total += xi.xi[j, k]
    return float(total)


def payoff_table(model: FbsModel, xi: CostMatrix) -> np.ndarray:
    """
    All payoffs at once.

    Args:
        model (FbsModel): The system.
        xi (CostMatrix): Facility costs.

    Returns:
        np.ndarray: Array (l, n); entry [k-1, i-1] is the cost of player i at profile k.
    """
    xi.check_model(model)
    at_load = _facility_costs_at_load(model, xi)
    table = np.empty((model.n_profiles, model.n_players))
    for i, incidence in enumerate(model.incidence_tables):
        used = incidence[model.choice_matrix[:, i] - 1]
        table[:, i] = (used * at_load).sum(axis=1)
    return table


def potential_table(model: FbsModel, xi: CostMatrix) -> np.ndarray:
    """Potential of every profile via the separated costs P_j(r_j)."""
    xi.check_model(model)
    cumulative = np.concatenate([np.zeros((model.n_facilities, 1)), xi.cumulative()], axis=1)
    facilities = np.arange(model.n_facilities)[None, :]
    return cumulative[facilities, model.load_matrix].sum(axis=1)


def check_payoff_source(model: FbsModel, payoffs: np.ndarray) -> np.ndarray:
    payoffs = np.asarray(payoffs, dtype=float)
    expected = (model.n_profiles, model.n_players)
    if payoffs.shape != expected:
        raise DimensionError(f"Payoff table shape {payoffs.shape} does not match (l, n) = {expected}")
    return payoffs


def default_tie_tol(payoffs: np.ndarray) -> float:
    """Tie tolerance 1e-9 * (1 + payoff scale) used for argmin membership."""
    payoffs = np.asarray(payoffs, dtype=float)
    scale = float(np.max(np.abs(payoffs))) if payoffs.size else 0.0
    return 1e-9 * (1.0 + scale)


def deviation_targets(model: FbsModel, player: int) -> np.ndarray:
    """Array (l, |A^i|): index-1 of the profile reached by each unilateral choice of `player`."""
    rows = np.arange(model.n_profiles)[:, None]
    current = model.choice_matrix[:, player - 1][:, None]
    alternatives = np.arange(1, model.sizes[player - 1] + 1)[None, :]
    return rows + (alternatives - current) * model.strides[player - 1]


def verify_potential_identity(
    model: FbsModel, xi: CostMatrix, perf: PerfTable, tol: float = 1e-9
) -> PotentialReport:
    """
    Check that `perf` is the potential of the congestion game defined by `xi`.

    Two conditions are scanned: the potential of every profile equals perf, and for
    every profile, player and alternative action the payoff change equals the perf change.

    Args:
        model (FbsModel): The system.
        xi (CostMatrix): Facility costs.
        perf (PerfTable): Candidate potential.
        tol (float): Absolute tolerance (>= 0).

    Returns:
        PotentialReport: Pass flag, worst violation and its witness.
    """
    if tol < 0:
        raise ValueError(f"Tolerance must be non-negative, got {tol}")
    xi.check_model(model)
    perf.check_model(model)
    values = perf.values

    gaps = np.abs(potential_table(model, xi) - values)
    k = int(np.argmax(gaps))
    worst, kind, witness = float(gaps[k]), "potential", (k + 1, None, None)

    payoffs = payoff_table(model, xi)
    for i in range(1, model.n_players + 1):
        targets = deviation_targets(model, i)
        d_payoff = payoffs[targets, i - 1] - payoffs[:, i - 1][:, None]
        d_perf = values[targets] - values[:, None]
        mismatch = np.abs(d_payoff - d_perf)
        flat = int(np.argmax(mismatch))
        if mismatch.flat[flat] > worst:
            row, col = np.unravel_index(flat, mismatch.shape)
            worst, kind, witness = float(mismatch.flat[flat]), "deviation", (int(row) + 1, i, int(col) + 1)

    report = PotentialReport(
        passed=worst <= tol,
        worst_violation=worst,
        kind=kind,
        profile=witness[0],
        player=witness[1],
        action=witness[2],
        tol=tol,
    )
    logger.debug(f"Potential identity check: {report.summary()}")
    return report


def nash_enumerate(model: FbsModel, payoffs: np.ndarray, tie_tol: Optional[float] = None) -> list:
    """
    Brute-force pure Nash equilibria of a cost game.

    Args:
        model (FbsModel): The system.
        payoffs (np.ndarray): Payoff source, array (l, n) of costs.
        tie_tol (float, optional): Deviations cheaper by at most this much count as ties.
            Defaults to `default_tie_tol(payoffs)`.

    Returns:
        list[Profile]: Profiles where no player has a strictly cheaper unilateral deviation,
            in canonical order.
    """
    payoffs = check_payoff_source(model, payoffs)
    if tie_tol is None:
        tie_tol = default_tie_tol(payoffs)
    stable = np.ones(model.n_profiles, dtype=bool)
    for i in range(1, model.n_players + 1):
        targets = deviation_targets(model, i)
        best_alternative = payoffs[targets, i - 1].min(axis=1)
        stable &= payoffs[:, i - 1] <= best_alternative + tie_tol
    equilibria = [unrank_profile(model, int(k) + 1) for k in np.flatnonzero(stable)]
    logger.debug(f"Found {len(equilibria)} pure Nash equilibria among {model.n_profiles} profiles")
    return equilibria


def deviation_gain(model: FbsModel, payoffs: np.ndarray, index: int, player: int, action: int) -> float:
    """Payoff change of `player` when switching to `action` at profile `index`."""
    payoffs = check_payoff_source(model, payoffs)
    target = deviate(model, index, player, action)
    return float(payoffs[target - 1, player - 1] - payoffs[index - 1, player - 1])
