import os
import re

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"
TRACE_COLUMNS = ["step", "player", "choices", "profile", "potential"]


def format_number(value: float) -> str:
    """
    Shortest text that parses back to the same binary64 value.

    Integral values are written without a decimal point.
    """
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def get_results_dir(output_dir=None) -> str:
    """
    Resolve the directory for command outputs.

    Args:
        output_dir (str, optional): Explicit directory; when omitted, `results/` under the
            project root (first parent holding pyproject.toml or .git).

    Returns:
        str: Existing directory path.
    """
    if output_dir is None:
        cwd = os.getcwd()

        # Look for marker file or directory
        while True:
            if "pyproject.toml" in os.listdir(cwd) or ".git" in os.listdir(cwd):
                base_dir = cwd
                break
            parent = os.path.dirname(cwd)
            if parent == cwd:
                raise FileNotFoundError("Could not find project root (pyproject.toml or .git).")
            cwd = parent
        output_dir = os.path.join(base_dir, "results")

    os.makedirs(output_dir, exist_ok=True)
    return output_dir


def save_results_to_csv(df: pd.DataFrame, file_path: str) -> str:
    """
    Save a DataFrame as CSV with round-trip float formatting.

    Args:
        df (pd.DataFrame): DataFrame to save.
        file_path (str): Output file path including filename.

    Returns:
        str: The written path.
    """
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    df.to_csv(file_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return file_path


def choice_labels(model) -> list:
    return [" ".join(str(c) for c in row) for row in model.choice_matrix]


def column_labels(n_facilities: int, n_players: int) -> list:
    """Labels xi_j_k of the flattened cost columns."""
    return [f"xi_{j}_{k}" for j in range(1, n_facilities + 1) for k in range(1, n_players + 1)]


def _profile_frame(model) -> pd.DataFrame:
    return pd.DataFrame(
        {"profile": np.arange(1, model.n_profiles + 1), "choices": choice_labels(model)}
    )


def cost_matrix_frame(xi) -> pd.DataFrame:
    """m x n cost table with a facility column and usage columns k1..kn."""
    m, n = xi.shape
    df = pd.DataFrame(xi.xi, columns=[f"k{k}" for k in range(1, n + 1)])
    df.insert(0, "facility", np.arange(1, m + 1))
    return df


def b_matrix_frame(model, bmat: np.ndarray, columns=None) -> pd.DataFrame:
    """
    Design matrix with one row per profile.

    Args:
        model (FbsModel): The system.
        bmat (np.ndarray): Array (l, c) of 0/1 entries.
        columns (list[int], optional): 1-based flat column indices held by `bmat`;
            defaults to all m*n columns.

    Returns:
        pd.DataFrame: profile, choices and one integer column per B column.
    """
    labels = column_labels(model.n_facilities, model.n_players)
    if columns is not None:
        labels = [labels[c - 1] for c in columns]
    df = _profile_frame(model)
    return pd.concat([df, pd.DataFrame(np.asarray(bmat, dtype=np.int64), columns=labels)], axis=1)


def loads_frame(model) -> pd.DataFrame:
    df = _profile_frame(model)
    loads = pd.DataFrame(
        model.load_matrix, columns=[f"r{j}" for j in range(1, model.n_facilities + 1)]
    )
    return pd.concat([df, loads], axis=1)


def payoffs_frame(model, payoffs: np.ndarray) -> pd.DataFrame:
    df = _profile_frame(model)
    table = pd.DataFrame(payoffs, columns=[f"c{i}" for i in range(1, model.n_players + 1)])
    return pd.concat([df, table], axis=1)


def values_frame(model, values, name: str) -> pd.DataFrame:
    df = _profile_frame(model)
    df[name] = np.asarray(values, dtype=float)
    return df


def payoff_display_table(model, payoffs: np.ndarray) -> str:
    """Human-readable payoff table (players as rows, profiles as columns), rounded to 0.01."""
    labels = ["".join(str(c) for c in row) for row in model.choice_matrix]
    table = pd.DataFrame(
        np.asarray(payoffs).T,
        index=[f"c{i}" for i in range(1, model.n_players + 1)],
        columns=labels,
    )
    return table.round(2).to_string()


def write_trace_file(path: str, trace, model, digest: str) -> str:
    """
    Write a replayable trace: '# key: value' header lines followed by one CSV row per step.

    Args:
        path (str): Output path.
        trace (Trace): The run to record.
        model (FbsModel): System the run belongs to (for choice tuples).
        digest (str): Model digest stored in the header.

    Returns:
        str: The written path.
    """
    labels = choice_labels(model)
    rows = []
    for step, (player, profile) in enumerate(zip(trace.schedule, trace.profiles[1:]), start=1):
        potential = None if trace.potential_series is None else trace.potential_series[step]
        rows.append([step, player, labels[profile - 1], profile, potential])
    df = pd.DataFrame(rows, columns=TRACE_COLUMNS)

    header = {
        "seed": "" if trace.seed is None else trace.seed,
        "schedule": trace.schedule_kind,
        "start": f"{labels[trace.start - 1]} ({trace.start})",
        "model": digest,
        "converged": str(trace.converged).lower(),
        "absorbing": "" if trace.absorbing is None else trace.absorbing,
    }
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in header.items():
            f.write(f"# {key}: {value}\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_trace_file(path: str) -> tuple:
    """
    Read a trace written by `write_trace_file`.

    Returns:
        tuple[dict, pd.DataFrame]: Header fields (start is the 1-based profile index) and
            the per-step rows.
    """
    header = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
    if "start" not in header:
        raise ValueError(f"{path} is not a trace file (no start header)")
    match = re.fullmatch(r"(?:.*\((\d+)\)|(\d+))", header["start"])
    if match is None:
        raise ValueError(f"{path}: cannot read start profile index from {header['start']!r}")
    header["start"] = int(match.group(1) or match.group(2))
    try:
        header["seed"] = int(header["seed"]) if header.get("seed") else None
    except ValueError:
        raise ValueError(f"{path}: seed header {header['seed']!r} is not an integer") from None
    df = pd.read_csv(path, comment="#", dtype={"choices": str})
    missing = [column for column in ("player", "profile") if column not in df.columns]
    if missing:
        raise ValueError(f"{path}: trace is missing columns {missing}")
    return header, df
