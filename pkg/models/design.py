import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg

from models.congestion import CostMatrix, PerfTable, payoff_table
from models.fbs_model import FbsModel

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_PENALTY_FACTOR = 10.0


class DesignError(ValueError):
    """Raised when a design problem is malformed (lengths, fixed facilities, empty desirable set)."""


class OutcomeKind(str, Enum):
    EXACT = "Exact"
    INCONSISTENT = "Inconsistent"
    LEAST_SQUARES = "LeastSquares"


@dataclass(frozen=True, eq=False)
class DesignSystem:
    """
    Linear system B xi^T = P over the profiles of a facility-based system.

    Attributes:
        bmat (np.ndarray): Array (l, m*n) of stacked B-rows in canonical profile order.
        pvec (np.ndarray): Length-l performance vector.
        n_facilities (int): m, used to reshape solutions into cost matrices.
        n_players (int): n.
    """

    bmat: np.ndarray
    pvec: np.ndarray
    n_facilities: int
    n_players: int

    @property
    def n_columns(self) -> int:
        return self.bmat.shape[1]

    def restrict_rows(self, indices: Sequence[int]) -> "DesignSystem":
        """Sub-system made of the given 1-based profile rows."""
        rows = np.asarray(indices, dtype=np.int64) - 1
        return DesignSystem(self.bmat[rows], self.pvec[rows], self.n_facilities, self.n_players)


@dataclass(frozen=True)
class Constraint:
    """
    Capacity constraint sum_t coeffs[t] * r_t(a) < threshold.

    Attributes:
        coeffs (tuple[float, ...]): One finite coefficient per facility.
        threshold (float): Strict upper bound T.
    """

    coeffs: tuple
    threshold: float

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if not np.all(np.isfinite(coeffs)) or not np.isfinite(self.threshold):
            raise DesignError("Constraint coefficients and threshold must be finite")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "threshold", float(self.threshold))


@dataclass(frozen=True, eq=False)
class DesignOutcome:
    """
    Result of a cost design.

    Attributes:
        kind (OutcomeKind): Exact, Inconsistent or LeastSquares.
        xi (CostMatrix | None): Designed costs (Exact and LeastSquares).
        rank (int): Rank of the (designable part of the) design matrix.
        freedom (int): Dimension of the solution nullspace.
        residual (float): Infinity-norm residual of the returned or best solution.
        p0 (PerfTable | None): Potential of the closest game (LeastSquares).
        epsilon_hat (float | None): max |P - P0| (LeastSquares).
        kept_columns (tuple[int, ...]): 1-based independent columns (LeastSquares).
        normal_residual (float | None): Infinity norm of B0^T (P - B0 xi0^T) (LeastSquares).
    """

    kind: OutcomeKind
    xi: Optional[CostMatrix]
    rank: int
    freedom: int
    residual: float
    p0: Optional[PerfTable] = None
    epsilon_hat: Optional[float] = None
    kept_columns: tuple = field(default_factory=tuple)
    normal_residual: Optional[float] = None

    @property
    def is_exact(self) -> bool:
        return self.kind is OutcomeKind.EXACT


@dataclass(frozen=True, eq=False)
class RestrictedDesign:
    """
    Design over the desirable profiles together with the penalized game.

    Attributes:
        outcome (DesignOutcome): Solution of the system restricted to desirable rows.
        omega (tuple[int, ...]): 1-based desirable profile indices.
        omega_c (tuple[int, ...]): 1-based undesirable profile indices.
        p_star (float): Penalty assigned to the criterion on undesirable profiles.
        penalized_perf (PerfTable): P on desirable profiles, p_star elsewhere.
        c_star (float | None): Penalty payoff on undesirable profiles (when a design exists).
        penalized_payoffs (np.ndarray | None): Array (l, n) of penalized payoffs.
    """

    outcome: DesignOutcome
    omega: tuple
    omega_c: tuple
    p_star: float
    penalized_perf: PerfTable
    c_star: Optional[float] = None
    penalized_payoffs: Optional[np.ndarray] = None


def _consistency_threshold(pvec: np.ndarray, tol: float) -> float:
    scale = float(np.max(np.abs(pvec))) if pvec.size else 0.0
    return tol * (1.0 + scale)


def _min_norm_solve(bmat: np.ndarray, rhs: np.ndarray) -> tuple:
    """Minimum-norm least-squares solution, effective rank and infinity-norm residual."""
    if bmat.shape[1] == 0:
        residual = float(np.max(np.abs(rhs))) if rhs.size else 0.0
        return np.zeros(0), 0, residual
    solution, _, rank, _ = scipy.linalg.lstsq(bmat.astype(float), rhs)
    residual = float(np.max(np.abs(bmat @ solution - rhs))) if rhs.size else 0.0
    return solution, int(rank), residual


def build_design_system(model: FbsModel, perf: PerfTable) -> DesignSystem:
    """
    Stack the B-rows of every profile against the performance vector.

    Args:
        model (FbsModel): The system.
        perf (PerfTable): Performance criterion P in canonical profile order.

    Returns:
        DesignSystem: Rows in canonical order, columns in flattened cost order.

    Raises:
        DesignError: If perf does not have one entry per profile.
    """
    if len(perf) != model.n_profiles:
        raise DesignError(f"Performance table has {len(perf)} entries, expected {model.n_profiles}")
    bmat = model.b_matrix
    logger.debug(f"Design system B has shape {bmat.shape}")
    return DesignSystem(
        bmat=bmat,
        pvec=np.array(perf.values, dtype=float),
        n_facilities=model.n_facilities,
        n_players=model.n_players,
    )


def solve_exact(sys: DesignSystem, tol: float = DEFAULT_TOL) -> DesignOutcome:
    """
    Solve B xi^T = P, reporting the minimum-norm solution when one exists.

    The system counts as consistent when the minimum-norm least-squares solution has
    residual at most tol * (1 + ||P||_inf).

    Args:
        sys (DesignSystem): The design system.
        tol (float): Relative consistency tolerance (> 0).

    Returns:
        DesignOutcome: Exact with xi, rank and freedom, or Inconsistent with rank and
            the best achievable residual.
    """
    if tol <= 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    solution, rank, residual = _min_norm_solve(sys.bmat, sys.pvec)
    freedom = sys.n_columns - rank
    threshold = _consistency_threshold(sys.pvec, tol)
    logger.debug(f"Exact design: rank {rank}, residual {residual:.3g}, threshold {threshold:.3g}")

    if residual <= threshold:
        xi = CostMatrix.from_flat(solution, sys.n_facilities, sys.n_players)
        logger.info(f"Design system is consistent (rank {rank}, {freedom} free directions)")
        return DesignOutcome(OutcomeKind.EXACT, xi, rank, freedom, residual)

    logger.info(f"Design system is inconsistent (rank {rank}, best residual {residual:.6g})")
    return DesignOutcome(OutcomeKind.INCONSISTENT, None, rank, freedom, residual)


def nullspace_basis(sys: DesignSystem) -> np.ndarray:
    """Orthonormal basis (m*n, freedom) of directions that leave B xi^T unchanged."""
    return scipy.linalg.null_space(sys.bmat.astype(float))


def solve_partial(
    model: FbsModel,
    perf: PerfTable,
    fixed: Mapping[int, Sequence[float]],
    tol: float = DEFAULT_TOL,
) -> DesignOutcome:
    """
    Design only the facilities not listed in `fixed`.

    The fixed facilities contribute B_hat(a) xi_hat^T, which is moved to the right-hand
    side; the remaining columns are solved as an exact design.

    Args:
        model (FbsModel): The system.
        perf (PerfTable): Performance criterion.
        fixed (Mapping[int, Sequence[float]]): 1-based facility -> its n given costs.
        tol (float): Relative consistency tolerance.

    Returns:
        DesignOutcome: On success the full cost matrix (fixed rows merged with solved rows).

    Raises:
        DesignError: On unknown facilities or cost rows of the wrong length.
    """
    sys = build_design_system(model, perf)
    n = model.n_players
    fixed_columns, fixed_values = [], []
    for facility, row in sorted(fixed.items()):
        if not 1 <= facility <= model.n_facilities:
            raise DesignError(f"Fixed facility {facility} outside 1..{model.n_facilities}")
        row = np.asarray(row, dtype=float)
        if row.shape != (n,):
            raise DesignError(f"Fixed facility {facility} needs {n} costs, got {row.size}")
        if not np.all(np.isfinite(row)):
            raise DesignError(f"Fixed facility {facility} has non-finite costs")
        fixed_columns.extend(range((facility - 1) * n, facility * n))
        fixed_values.extend(row)

    fixed_columns = np.array(fixed_columns, dtype=np.int64)
    free_columns = np.setdiff1d(np.arange(sys.n_columns), fixed_columns)
    reduced = sys.pvec - sys.bmat[:, fixed_columns] @ np.array(fixed_values, dtype=float)
    logger.debug(f"Partial design: {len(fixed)} fixed facilities, {free_columns.size} free columns")

    solution, rank, residual = _min_norm_solve(sys.bmat[:, free_columns], reduced)
    freedom = free_columns.size - rank
    if residual > _consistency_threshold(np.concatenate([sys.pvec, sys.pvec - reduced]), tol):
        logger.info(f"Partial design is inconsistent (best residual {residual:.6g})")
        return DesignOutcome(OutcomeKind.INCONSISTENT, None, rank, freedom, residual)

    flat = np.zeros(sys.n_columns)
    flat[fixed_columns] = fixed_values
    flat[free_columns] = solution
    logger.info(f"Partial design is consistent (rank {rank}, {freedom} free directions)")
    xi = CostMatrix.from_flat(flat, model.n_facilities, model.n_players)
    return DesignOutcome(OutcomeKind.EXACT, xi, rank, freedom, residual)


def desirable_profiles(model: FbsModel, constraints: Sequence[Constraint]) -> tuple:
    """
    Split the profiles by the capacity constraints.

    Args:
        model (FbsModel): The system.
        constraints (Sequence[Constraint]): Strict linear constraints on the load vector.

    Returns:
        tuple[tuple[int, ...], tuple[int, ...]]: 1-based desirable and undesirable indices.
    """
    satisfied = np.ones(model.n_profiles, dtype=bool)
    for constraint in constraints:
        if len(constraint.coeffs) != model.n_facilities:
            raise DesignError(
                f"Constraint has {len(constraint.coeffs)} coefficients, expected {model.n_facilities}"
            )
        satisfied &= model.load_matrix @ np.array(constraint.coeffs) < constraint.threshold
    omega = tuple(int(k) + 1 for k in np.flatnonzero(satisfied))
    omega_c = tuple(int(k) + 1 for k in np.flatnonzero(~satisfied))
    if not omega:
        logger.error("No profile satisfies the constraints; the desirable set is empty")
    return omega, omega_c


def solve_restricted(
    model: FbsModel,
    perf: PerfTable,
    constraints: Sequence[Constraint],
    tol: float = DEFAULT_TOL,
    penalty_factor: float = DEFAULT_PENALTY_FACTOR,
) -> RestrictedDesign:
    """
    Design costs that reproduce P on the desirable profiles only, and build the penalized game.

    Undesirable profiles get the penalty criterion P* = factor * (1 + max |P| over the
    desirable set) and, when a design exists, the penalty payoff
    c* = factor * (1 + max |c_i| over players and desirable profiles).

    Args:
        model (FbsModel): The system.
        perf (PerfTable): Performance criterion.
        constraints (Sequence[Constraint]): Capacity constraints.
        tol (float): Relative consistency tolerance.
        penalty_factor (float): Multiplier in the penalty constants.

    Returns:
        RestrictedDesign: Outcome on the desirable rows plus the penalized tables.

    Raises:
        DesignError: If no profile is desirable.
    """
    sys = build_design_system(model, perf)
    omega, omega_c = desirable_profiles(model, constraints)
    if not omega:
        raise DesignError("Restricted design needs at least one desirable profile")

    outcome = solve_exact(sys.restrict_rows(omega), tol)
    rows = np.array(omega) - 1
    bad_rows = np.array(omega_c, dtype=np.int64) - 1

    p_star = penalty_factor * (1.0 + float(np.max(np.abs(sys.pvec[rows]))))
    penalized = sys.pvec.copy()
    penalized[bad_rows] = p_star

    c_star, penalized_payoffs = None, None
    if outcome.xi is not None:
        payoffs = payoff_table(model, outcome.xi)
        c_star = penalty_factor * (1.0 + float(np.max(np.abs(payoffs[rows]))))
        penalized_payoffs = payoffs.copy()
        penalized_payoffs[bad_rows] = c_star

    if omega_c:
        logger.warning(
            f"{len(omega_c)} undesirable profiles penalized with P*={p_star:g}"
            + (f", c*={c_star:g}" if c_star is not None else "")
            + f" (rule: {penalty_factor:g} * (1 + max over desirable profiles))"
        )
    return RestrictedDesign(
        outcome=outcome,
        omega=omega,
        omega_c=omega_c,
        p_star=p_star,
        penalized_perf=PerfTable(penalized),
        c_star=c_star,
        penalized_payoffs=penalized_payoffs,
    )


def basis_columns(sys: DesignSystem, tol: float = DEFAULT_TOL) -> tuple:
    """
    Greedy leftmost selection of linearly independent columns of B.

    A column is kept when its component orthogonal to the previously kept columns has
    norm above max(tol, eps * l) times the column norm.

    Args:
        sys (DesignSystem): The design system.
        tol (float): Relative independence tolerance.

    Returns:
        tuple[np.ndarray, list[int]]: B0 (kept columns only) and the 1-based kept indices.
    """
    bmat = sys.bmat.astype(float)
    relative = max(tol, np.finfo(float).eps * bmat.shape[0])
    basis = np.zeros((bmat.shape[0], 0))
    kept = []
    for c in range(bmat.shape[1]):
        column = bmat[:, c]
        norm = np.linalg.norm(column)
        if norm == 0.0:
            continue
        # two Gram-Schmidt passes keep the basis orthonormal to working precision
        remainder = column - basis @ (basis.T @ column)
        remainder = remainder - basis @ (basis.T @ remainder)
        remainder_norm = np.linalg.norm(remainder)
        if remainder_norm > relative * norm:
            basis = np.column_stack([basis, remainder / remainder_norm])
            kept.append(c + 1)
    logger.debug(f"Kept {len(kept)} of {bmat.shape[1]} columns: {kept}")
    return bmat[:, np.array(kept, dtype=np.int64) - 1], kept


def least_squares_design(model: FbsModel, perf: PerfTable, tol: float = DEFAULT_TOL) -> DesignOutcome:
    """
    Closest congestion game: project P onto the span of the independent columns of B.

    Solves the normal equations (B0^T B0) xi0^T = B0^T P on the kept columns, sets the
    dropped columns to zero, and evaluates P0 = B xi0^T.

    Args:
        model (FbsModel): The system.
        perf (PerfTable): Performance criterion.
        tol (float): Column-independence tolerance.

    Returns:
        DesignOutcome: LeastSquares outcome with xi0, P0, epsilon_hat and kept columns.
    """
    sys = build_design_system(model, perf)
    b0, kept = basis_columns(sys, tol)
    flat = np.zeros(sys.n_columns)
    if kept:
        gram = b0.T @ b0
        coefficients = scipy.linalg.solve(gram, b0.T @ sys.pvec, assume_a="pos")
        flat[np.array(kept) - 1] = coefficients
        normal_residual = float(np.max(np.abs(b0.T @ (sys.pvec - b0 @ coefficients))))
    else:
        normal_residual = 0.0

    p0 = sys.bmat @ flat
    epsilon_hat = float(np.max(np.abs(sys.pvec - p0)))
    dropped = sys.n_columns - len(kept)
    if dropped:
        logger.info(f"Closest game drops {dropped} dependent columns (their costs are set to 0)")
    logger.info(f"Closest congestion game: epsilon_hat = {epsilon_hat:.6g}")
    return DesignOutcome(
        kind=OutcomeKind.LEAST_SQUARES,
        xi=CostMatrix.from_flat(flat, model.n_facilities, model.n_players),
        rank=len(kept),
        freedom=dropped,
        residual=epsilon_hat,
        p0=PerfTable(p0),
        epsilon_hat=epsilon_hat,
        kept_columns=tuple(kept),
        normal_residual=normal_residual,
    )
