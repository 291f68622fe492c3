import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from models.congestion import CostMatrix, PerfTable
from models.design import Constraint
from models.fbs_model import FbsModel, rank_profile
from utils.utils import format_number

logger = logging.getLogger(__name__)

HEADER_KEYS = ("players", "facilities")
SECTIONS = ("actions", "perf", "xi", "constraints", "fixed")
EMPTY_ACTION = "-"


class DocumentError(ValueError):
    """Raised when a system document cannot be parsed or lacks a required block."""


@dataclass(eq=False)
class SystemDocument:
    """
    A facility-based system together with its optional companions.

    Attributes:
        model (FbsModel): Players, facilities, action sets and optional criterion.
        xi (CostMatrix | None): Facility costs.
        constraints (list[Constraint]): Capacity constraints for restricted design.
        fixed (dict[int, tuple[float, ...]]): Given cost rows of non-designable facilities.
    """

    model: FbsModel
    xi: Optional[CostMatrix] = None
    constraints: list = field(default_factory=list)
    fixed: dict = field(default_factory=dict)

    @property
    def perf(self) -> Optional[PerfTable]:
        return None if self.model.perf is None else PerfTable.from_model(self.model)

    def require_perf(self) -> PerfTable:
        if self.model.perf is None:
            raise DocumentError("Document has no [perf] block")
        return self.perf

    def require_xi(self) -> CostMatrix:
        if self.xi is None:
            raise DocumentError("Document has no [xi] block")
        return self.xi


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _numbers(tokens, lineno: int) -> list:
    try:
        return [float(t) for t in tokens]
    except ValueError as e:
        raise DocumentError(f"line {lineno}: expected numbers, got {' '.join(tokens)!r}") from e


def _integers(tokens, lineno: int) -> list:
    try:
        return [int(t) for t in tokens]
    except ValueError as e:
        raise DocumentError(f"line {lineno}: expected integers, got {' '.join(tokens)!r}") from e


def _split_keyed(line: str, lineno: int) -> tuple:
    key, sep, rest = line.partition(":")
    if not sep:
        raise DocumentError(f"line {lineno}: expected 'key: value', got {line!r}")
    return key.strip(), rest.strip()


def _parse_actions(rows, n_players: int) -> tuple:
    actions = {}
    for lineno, line in rows:
        key, rest = _split_keyed(line, lineno)
        (player,) = _integers([key], lineno)
        if not 1 <= player <= n_players:
            raise DocumentError(f"line {lineno}: player {player} outside 1..{n_players}")
        if player in actions:
            raise DocumentError(f"line {lineno}: actions of player {player} given twice")
        parsed = []
        for chunk in rest.split("|"):
            tokens = chunk.split()
            if tokens == [EMPTY_ACTION]:
                parsed.append(())
            elif not tokens:
                raise DocumentError(f"line {lineno}: blank action (write '{EMPTY_ACTION}' for the empty set)")
            else:
                parsed.append(tuple(_integers(tokens, lineno)))
        actions[player] = tuple(parsed)
    missing = [i for i in range(1, n_players + 1) if i not in actions]
    if missing:
        raise DocumentError(f"[actions] is missing players {missing}")
    return tuple(actions[i] for i in range(1, n_players + 1))


def _parse_perf(rows, model: FbsModel) -> list:
    keyed = [":" in line for _, line in rows]
    if any(keyed) and not all(keyed):
        raise DocumentError("[perf] mixes keyed and plain rows")
    if not all(keyed):
        values = [v for lineno, line in rows for v in _numbers(line.split(), lineno)]
        if len(values) != model.n_profiles:
            raise DocumentError(f"[perf] has {len(values)} values, expected {model.n_profiles}")
        return values

    values = [None] * model.n_profiles
    for lineno, line in rows:
        key, rest = _split_keyed(line, lineno)
        choices = _integers(key.split(), lineno)
        try:
            index = rank_profile(model, choices)
        except ValueError as e:
            raise DocumentError(f"line {lineno}: {e}") from e
        if values[index - 1] is not None:
            raise DocumentError(f"line {lineno}: profile {key!r} given twice")
        (values[index - 1],) = _numbers(rest.split(), lineno)
    missing = [k + 1 for k, v in enumerate(values) if v is None]
    if missing:
        raise DocumentError(f"[perf] is missing profiles {missing[:10]}")
    return values


def _parse_xi(rows, m: int, n: int) -> CostMatrix:
    table = [_numbers(line.split(), lineno) for lineno, line in rows]
    if len(table) != m or any(len(row) != n for row in table):
        raise DocumentError(f"[xi] must have {m} rows of {n} costs")
    return CostMatrix(np.array(table))


def _parse_constraints(rows, m: int) -> list:
    constraints = []
    for lineno, line in rows:
        left, sep, right = line.partition("<")
        if not sep:
            raise DocumentError(f"line {lineno}: constraint needs '<', got {line!r}")
        coeffs = _numbers(left.split(), lineno)
        if len(coeffs) != m:
            raise DocumentError(f"line {lineno}: constraint needs {m} coefficients, got {len(coeffs)}")
        (threshold,) = _numbers(right.split(), lineno)
        constraints.append(Constraint(tuple(coeffs), threshold))
    return constraints


def _parse_fixed(rows, m: int, n: int) -> dict:
    fixed = {}
    for lineno, line in rows:
        key, rest = _split_keyed(line, lineno)
        (facility,) = _integers([key], lineno)
        if not 1 <= facility <= m:
            raise DocumentError(f"line {lineno}: facility {facility} outside 1..{m}")
        if facility in fixed:
            raise DocumentError(f"line {lineno}: facility {facility} fixed twice")
        costs = _numbers(rest.split(), lineno)
        if len(costs) != n:
            raise DocumentError(f"line {lineno}: facility {facility} needs {n} costs, got {len(costs)}")
        fixed[facility] = tuple(costs)
    return fixed


def _split_sections(text: str) -> tuple:
    header, sections, current = {}, {}, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise DocumentError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise DocumentError(f"line {lineno}: section [{current}] given twice")
            sections[current] = []
        elif current is None:
            key, value = _split_keyed(line, lineno)
            if key not in HEADER_KEYS:
                raise DocumentError(f"line {lineno}: unknown key {key!r}")
            header[key] = _integers([value], lineno)[0]
        else:
            sections[current].append((lineno, line))
    return header, sections


def parse_document(text: str) -> SystemDocument:
    """
    Parse the line-oriented system format.

    Args:
        text (str): Document text.

    Returns:
        SystemDocument: Validated model plus optional xi, constraints and fixed rows.

    Raises:
        DocumentError: On syntax errors, unknown keys or sections, or invalid content.
    """
    header, sections = _split_sections(text)
    for key in HEADER_KEYS:
        if key not in header:
            raise DocumentError(f"Missing required key {key!r}")
    if "actions" not in sections:
        raise DocumentError("Missing required section [actions]")
    n, m = header["players"], header["facilities"]

    try:
        model = FbsModel(n, m, _parse_actions(sections["actions"], n))
        model.log_warnings()
        if "perf" in sections:
            model = model.with_perf(_parse_perf(sections["perf"], model))
        xi = _parse_xi(sections["xi"], m, n) if "xi" in sections else None
        constraints = _parse_constraints(sections.get("constraints", []), m)
        fixed = _parse_fixed(sections.get("fixed", []), m, n)
    except DocumentError:
        raise
    except ValueError as e:
        raise DocumentError(str(e)) from e

    logger.debug(
        f"Parsed document: n={n}, m={m}, l={model.n_profiles}, sections={sorted(sections)}"
    )
    return SystemDocument(model=model, xi=xi, constraints=constraints, fixed=fixed)


def serialize_document(doc: SystemDocument) -> str:
    """Canonical text form; parsing it back yields an identical document."""
    model = doc.model
    lines = [f"players: {model.n_players}", f"facilities: {model.n_facilities}", "", "[actions]"]
    for i, action_set in enumerate(model.actions, start=1):
        rendered = [" ".join(str(j) for j in action) if action else EMPTY_ACTION for action in action_set]
        lines.append(f"{i}: " + " | ".join(rendered))

    if model.perf is not None:
        lines += ["", "[perf]"]
        width = model.sizes[-1]
        for start in range(0, model.n_profiles, width):
            lines.append(" ".join(format_number(v) for v in model.perf[start : start + width]))
    if doc.xi is not None:
        lines += ["", "[xi]"]
        lines += [" ".join(format_number(v) for v in row) for row in doc.xi.xi]
    if doc.constraints:
        lines += ["", "[constraints]"]
        for c in doc.constraints:
            lines.append(" ".join(format_number(v) for v in c.coeffs) + f" < {format_number(c.threshold)}")
    if doc.fixed:
        lines += ["", "[fixed]"]
        for facility, costs in sorted(doc.fixed.items()):
            lines.append(f"{facility}: " + " ".join(format_number(v) for v in costs))
    return "\n".join(lines) + "\n"


def load_document(path) -> SystemDocument:
    with open(path, encoding="utf-8") as f:
        return parse_document(f.read())


def save_document(doc: SystemDocument, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_document(doc))


def load_fixed_costs(path, model: FbsModel) -> dict:
    """Read 'facility: costs' rows (optionally under a [fixed] header) for partial design."""
    with open(path, encoding="utf-8") as f:
        rows = []
        for lineno, raw in enumerate(f, start=1):
            line = _strip(raw)
            if line and line != "[fixed]":
                rows.append((lineno, line))
    return _parse_fixed(rows, model.n_facilities, model.n_players)


def model_digest(model: FbsModel) -> str:
    """sha256 of the canonical serialization of the model (criterion included)."""
    text = serialize_document(SystemDocument(model=model))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
