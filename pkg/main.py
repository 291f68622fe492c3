import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from models.congestion import (
    PerfTable,
    nash_enumerate,
    payoff_table,
    potential_table,
    verify_potential_identity,
)
from models.design import (
    DesignError,
    OutcomeKind,
    basis_columns,
    build_design_system,
    least_squares_design,
    solve_exact,
    solve_partial,
    solve_restricted,
)
from models.dynamics import (
    SCHEDULES,
    best_response_maps,
    dynamic_equivalence,
    fixed_points,
    near_optimality_check,
    replay,
    simulate,
    transition_maps,
)
from models.fbs_model import rank_profile, unrank_profile
from utils.document import DocumentError, load_document, load_fixed_costs, model_digest
from utils.logging_config import setup_logging
from utils.plotting import plot_profile_dynamics, save_profile_dynamics_svg
from utils.utils import (
    b_matrix_frame,
    cost_matrix_frame,
    format_number,
    get_results_dir,
    loads_frame,
    payoff_display_table,
    payoffs_frame,
    read_trace_file,
    save_results_to_csv,
    values_frame,
    write_trace_file,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INCONSISTENT = 2
EXIT_FAILED = 3

solver_config = {
    "tol": 1e-9,
    "penalty_factor": 10.0,
}

simulation_config = {
    "schedule": "rand",
    "seed": 0,
    "max_steps_factor": 100,
    "max_workers": 8,
}

COST_NOTE = "Payoffs are costs: every player minimizes, equilibria are cost minima."


def write_report(lines, output_dir, filename="report.txt"):
    """Print a report and save it next to the other outputs."""
    text = "\n".join(lines) + "\n"
    path = os.path.join(output_dir, filename)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    sys.stdout.write(text)
    logger.info(f"Report written to {path}")
    return path


def resolve_cost_matrix(doc, source, tol):
    """
    Pick the facility costs a command plays with.

    Args:
        doc (SystemDocument): Parsed input.
        source (str): "given" (the [xi] block), "designed" (exact design of [perf]) or
            "closest" (closest congestion game of [perf]).
        tol (float): Solver tolerance.

    Returns:
        CostMatrix: The costs.
    """
    if source == "given":
        return doc.require_xi()
    perf = doc.require_perf()
    if source == "designed":
        outcome = solve_exact(build_design_system(doc.model, perf), tol)
        if not outcome.is_exact:
            raise DesignError("The criterion cannot be realized exactly; use --xi-source closest")
        return outcome.xi
    if source == "closest":
        return least_squares_design(doc.model, perf, tol).xi
    raise ValueError(f"Unknown cost source {source!r}")


def cmd_design(args):
    doc = load_document(args.input)
    model, perf = doc.model, doc.require_perf()
    output_dir = get_results_dir(args.output_dir)
    tol = args.tol

    fixed = dict(doc.fixed)
    if args.partial:
        fixed.update(load_fixed_costs(args.partial, model))

    lines = [COST_NOTE]
    restricted = None
    if args.restricted:
        if not doc.constraints:
            raise DocumentError("--restricted needs a [constraints] block")
        if fixed:
            raise DocumentError("--restricted cannot be combined with fixed facility costs")
        restricted = solve_restricted(model, perf, doc.constraints, tol, solver_config["penalty_factor"])
        outcome = restricted.outcome
        lines.append(
            f"mode: restricted ({len(restricted.omega)} desirable, {len(restricted.omega_c)} undesirable profiles)"
        )
    elif fixed:
        outcome = solve_partial(model, perf, fixed, tol)
        lines.append(f"mode: partial (fixed facilities {sorted(fixed)})")
    else:
        outcome = solve_exact(build_design_system(model, perf), tol)
        lines.append("mode: exact")

    lines += [
        f"outcome: {outcome.kind.value}",
        f"rank: {outcome.rank}",
        f"freedom: {outcome.freedom}",
        f"residual: {outcome.residual:.6g}",
    ]

    if outcome.kind is OutcomeKind.EXACT:
        xi_path = save_results_to_csv(cost_matrix_frame(outcome.xi), os.path.join(output_dir, "xi.csv"))
        lines.append(f"xi: {xi_path}")
        check_tol = 4 * tol * (1.0 + float(np.max(np.abs(perf.values))))
        if restricted is None:
            report = verify_potential_identity(model, outcome.xi, perf, check_tol)
            lines.append(f"verification: {report.summary()}")
        else:
            rows = np.array(restricted.omega) - 1
            gap = float(np.max(np.abs(potential_table(model, outcome.xi)[rows] - perf.values[rows])))
            status = "PASS" if gap <= check_tol else "FAIL"
            lines.append(f"verification on desirable profiles: {status}: worst violation {gap:.6g}")
    else:
        lines.append("The criterion is not a congestion-game potential; try `closest` for the nearest one.")

    if restricted is not None:
        lines.append(
            f"penalties: P*={format_number(restricted.p_star)}"
            + ("" if restricted.c_star is None else f", c*={format_number(restricted.c_star)}")
            + f" ({solver_config['penalty_factor']:g} * (1 + max over desirable profiles); chosen rule)"
        )
        save_results_to_csv(
            values_frame(model, restricted.penalized_perf.values, "penalized_perf"),
            os.path.join(output_dir, "penalized_perf.csv"),
        )
        if restricted.penalized_payoffs is not None:
            save_results_to_csv(
                payoffs_frame(model, restricted.penalized_payoffs),
                os.path.join(output_dir, "penalized_payoffs.csv"),
            )
        minimizers = np.flatnonzero(restricted.penalized_perf.values == restricted.penalized_perf.values.min()) + 1
        lines.append(f"penalized criterion minimizers: {[int(k) for k in minimizers]}")

    write_report(lines, output_dir)
    return EXIT_OK if outcome.kind is OutcomeKind.EXACT else EXIT_INCONSISTENT


def cmd_closest(args):
    doc = load_document(args.input)
    model, perf = doc.model, doc.require_perf()
    output_dir = get_results_dir(args.output_dir)

    outcome = least_squares_design(model, perf, args.tol)
    save_results_to_csv(cost_matrix_frame(outcome.xi), os.path.join(output_dir, "xi0.csv"))
    p0_frame = values_frame(model, perf.values, "perf")
    p0_frame["p0"] = outcome.p0.values
    save_results_to_csv(p0_frame, os.path.join(output_dir, "p0.csv"))

    lines = [
        COST_NOTE,
        f"outcome: {outcome.kind.value}",
        f"kept columns: {' '.join(str(c) for c in outcome.kept_columns)}",
        f"dropped columns: {outcome.freedom}",
        f"epsilon_hat: {outcome.epsilon_hat:.6g}",
        f"normal-equation residual: {outcome.normal_residual:.3g}",
    ]

    if doc.xi is not None:
        maps_given = best_response_maps(model, payoff_table(model, doc.xi))
        maps_closest = best_response_maps(model, payoff_table(model, outcome.xi))
        strict = dynamic_equivalence(maps_given, maps_closest, "strict")
        selected = dynamic_equivalence(maps_given, maps_closest, "selected")
        lines.append(
            f"dynamic equivalence with given xi: strict={strict.equivalent}, selected={selected.equivalent}"
        )
        equilibria = sorted(fixed_points(model, maps_given))
        lines.append(f"fixed points of the given dynamics: {equilibria}")
        if selected.equivalent and len(equilibria) == 1:
            epsilon = args.epsilon
            if epsilon is None:
                epsilon = outcome.epsilon_hat * (1 + 1e-6) + args.tol
            check = near_optimality_check(perf, outcome.p0, equilibria[0], epsilon)
            lines.append(
                f"near optimality: epsilon={epsilon:.6g}, gap={check.gap:.6g}, "
                f"bound={check.bound:.6g}, holds={check.holds}"
            )

    write_report(lines, output_dir)
    return EXIT_OK


def parse_start(text, model):
    """Profile given as '1,2,2', '1 2 2' or a plain 1-based index."""
    tokens = text.replace(",", " ").split()
    if len(tokens) == 1 and model.n_players > 1:
        index = int(tokens[0])
        model.check_index(index)
        return index
    return rank_profile(model, [int(t) for t in tokens])


def run_simulation(maps, starts, schedule_kind, seed, max_steps, values):
    """
    Run one simulation per start, concurrently.

    Run r of a random schedule uses seed + r so that runs differ but stay reproducible.

    Returns:
        list[Trace]: Traces in the order of `starts`.
    """

    def run_one(item):
        r, x0 = item
        run_seed = None if seed is None else seed + r
        return simulate(maps, schedule_kind, x0, max_steps=max_steps, seed=run_seed, values=values)

    workers = max(1, min(simulation_config["max_workers"], len(starts)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, enumerate(starts)))


def cmd_simulate(args):
    doc = load_document(args.input)
    model = doc.model
    output_dir = get_results_dir(args.output_dir)

    xi = resolve_cost_matrix(doc, args.xi_source, args.tol)
    maps = transition_maps(best_response_maps(model, payoff_table(model, xi)), model)
    values = potential_table(model, xi)
    digest = model_digest(model)

    if args.replay:
        header, recorded = read_trace_file(args.replay)
        if header.get("model") and header["model"] != digest:
            logger.warning("Trace was recorded for a different model digest")
        trace = replay(maps, recorded["player"].tolist(), header["start"], values=values)
        matches = list(trace.profiles[1:]) == recorded["profile"].tolist()
        write_report(
            [
                f"replay of {args.replay}: {trace.steps} steps",
                f"profile sequence reproduced: {matches}",
                f"final profile: {trace.profiles[-1]}",
            ],
            output_dir,
            "replay.txt",
        )
        return EXIT_OK if matches else EXIT_FAILED

    if args.all_starts:
        starts = list(range(1, model.n_profiles + 1))
    elif args.start:
        starts = [parse_start(args.start, model)]
    elif args.random_starts:
        rng = np.random.default_rng(args.seed)
        starts = [int(k) for k in rng.integers(1, model.n_profiles + 1, size=args.random_starts)]
    else:
        starts = [1]

    max_steps = args.max_steps or simulation_config["max_steps_factor"] * model.n_profiles
    seed = args.seed if args.schedule == "rand" else None
    traces = run_simulation(maps, starts, args.schedule, seed, max_steps, values)

    lines = [COST_NOTE, f"schedule: {args.schedule}, runs: {len(traces)}, max steps: {max_steps}"]
    absorbed = {}
    for r, trace in enumerate(traces):
        path = write_trace_file(
            os.path.join(output_dir, f"trace_{r + 1:03d}_start{trace.start}.csv"), trace, model, digest
        )
        if trace.converged:
            absorbed[trace.absorbing] = absorbed.get(trace.absorbing, 0) + 1
            choices = unrank_profile(model, trace.absorbing).label()
            lines.append(f"run {r + 1}: start {trace.start}, {trace.steps} steps, absorbed at {trace.absorbing} ({choices})")
        else:
            lines.append(f"run {r + 1}: start {trace.start}, {trace.steps} steps, not converged")
        logger.debug(f"Trace written to {path}")

    for profile, count in sorted(absorbed.items()):
        lines.append(f"absorbing profile {profile}: {count}/{len(traces)} runs")

    if args.svg:
        save_profile_dynamics_svg(traces, args.svg, n_profiles=model.n_profiles)
        lines.append(f"svg: {args.svg}")
    if args.html:
        plot_profile_dynamics(traces, title="Profile Dynamics", output_dir=output_dir)

    write_report(lines, output_dir, "summary.txt")
    return EXIT_OK if all(t.converged for t in traces) else EXIT_FAILED


def cmd_verify(args):
    doc = load_document(args.input)
    xi, perf = doc.require_xi(), doc.require_perf()
    report = verify_potential_identity(doc.model, xi, perf, args.tol)
    output_dir = get_results_dir(args.output_dir)
    write_report([report.summary()], output_dir, "verify.txt")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_nash(args):
    doc = load_document(args.input)
    xi = resolve_cost_matrix(doc, args.xi_source, args.tol)
    equilibria = nash_enumerate(doc.model, payoff_table(doc.model, xi))
    lines = [COST_NOTE, f"pure Nash equilibria: {len(equilibria)}"]
    lines += [f"{p.index}: {p.label()}" for p in equilibria]
    write_report(lines, get_results_dir(args.output_dir), "nash.txt")
    return EXIT_OK


def cmd_equiv(args):
    doc_a, doc_b = load_document(args.input), load_document(args.other)
    a, b = doc_a.model, doc_b.model
    if (a.n_players, a.n_facilities, a.actions) != (b.n_players, b.n_facilities, b.actions):
        raise DocumentError("The two documents describe different systems")
    maps_a = best_response_maps(a, payoff_table(a, doc_a.require_xi()))
    maps_b = best_response_maps(b, payoff_table(b, doc_b.require_xi()))
    report = dynamic_equivalence(maps_a, maps_b, args.mode)

    lines = [f"mode: {report.mode}", f"equivalent: {report.equivalent}"]
    for w in report.witnesses:
        lines.append(f"player {w.player}, profile {w.profile}: {w.left} vs {w.right}")
    write_report(lines, get_results_dir(args.output_dir), "equiv.txt")
    return EXIT_OK if report.equivalent else EXIT_FAILED


def cmd_export(args):
    doc = load_document(args.input)
    model = doc.model
    output_dir = get_results_dir(args.output_dir)
    perf = doc.perf if doc.perf is not None else PerfTable(np.zeros(model.n_profiles))

    sys_ = build_design_system(model, perf)
    b0, kept = basis_columns(sys_, args.tol)
    save_results_to_csv(b_matrix_frame(model, sys_.bmat), os.path.join(output_dir, "B.csv"))
    save_results_to_csv(b_matrix_frame(model, b0, columns=kept), os.path.join(output_dir, "B0.csv"))
    save_results_to_csv(loads_frame(model), os.path.join(output_dir, "loads.csv"))
    if doc.perf is not None:
        save_results_to_csv(values_frame(model, perf.values, "perf"), os.path.join(output_dir, "P.csv"))

    lines = [f"B: {sys_.bmat.shape[0]} x {sys_.bmat.shape[1]}", f"B0 kept columns: {kept}"]
    try:
        xi = resolve_cost_matrix(doc, args.xi_source, args.tol)
    except (DocumentError, DesignError) as e:
        logger.warning(f"Skipping payoff export: {e}")
    else:
        payoffs = payoff_table(model, xi)
        save_results_to_csv(payoffs_frame(model, payoffs), os.path.join(output_dir, "payoffs.csv"))
        lines += ["payoffs (rounded to 0.01):", payoff_display_table(model, payoffs)]
    write_report(lines, output_dir, "export.txt")
    return EXIT_OK


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = CliParser(
        description="Design facility costs that turn a facility-based system into a congestion game. "
        + COST_NOTE
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: INFO)",
    )
    parser.add_argument("--log-file", default=None, help="Also write logs to this file")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_command(name, handler, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("input", help="System document (text format, see Readme)")
        sub.add_argument("--output-dir", default=None, help="Output directory (default: results/)")
        sub.add_argument("--tol", type=float, default=solver_config["tol"], help="Solver tolerance")
        sub.set_defaults(handler=handler)
        return sub

    def add_xi_source(sub, default):
        sub.add_argument(
            "--xi-source",
            choices=["given", "designed", "closest"],
            default=default,
            help="Costs to play with: the [xi] block, the exact design or the closest game",
        )

    design = add_command("design", cmd_design, "Design facility costs for the [perf] criterion")
    design.add_argument("--partial", default=None, help="File of fixed facility costs ('facility: costs')")
    design.add_argument("--restricted", action="store_true", help="Design on profiles meeting [constraints]")

    closest = add_command("closest", cmd_closest, "Least-squares closest congestion game")
    closest.add_argument("--epsilon", type=float, default=None, help="Epsilon for the near-optimality check")

    sim = add_command("simulate", cmd_simulate, "Best-response dynamics from one or more starts")
    add_xi_source(sim, "given")
    sim.add_argument("--seed", type=int, default=simulation_config["seed"], help="Seed of the random schedule")
    sim.add_argument("--schedule", choices=sorted(SCHEDULES), default=simulation_config["schedule"])
    starts = sim.add_mutually_exclusive_group()
    starts.add_argument("--start", default=None, help="Start profile, e.g. '1,1,1' or an index")
    starts.add_argument("--all-starts", action="store_true", help="One run from every profile")
    starts.add_argument("--random-starts", type=int, default=None, help="Number of random start profiles")
    starts.add_argument("--replay", default=None, help="Replay a recorded trace file")
    sim.add_argument("--max-steps", type=int, default=None, help="Step budget per run (default: 100 * l)")
    sim.add_argument("--svg", default=None, help="Write a profile-dynamics step plot to this SVG path")
    sim.add_argument("--html", action="store_true", help="Also write an interactive HTML plot")

    add_command("verify", cmd_verify, "Check that [perf] is the potential of [xi]")

    nash = add_command("nash", cmd_nash, "List all pure Nash equilibria")
    add_xi_source(nash, "given")

    equiv = add_command("equiv", cmd_equiv, "Compare the best-response dynamics of two documents")
    equiv.add_argument("other", help="Second system document")
    mode = equiv.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="mode", action="store_const", const="strict", help="Compare argmin sets")
    mode.add_argument("--selected", dest="mode", action="store_const", const="selected", help="Compare choices")
    equiv.set_defaults(mode="strict")

    export = add_command("export", cmd_export, "Write B, B0, loads and payoff tables as CSV")
    add_xi_source(export, "given")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.log_level, log_to_file=args.log_file is not None, filename=args.log_file or "congestion_design.log")
    logger.info(f"Args received: {args}")

    if getattr(args, "max_steps", None) is not None and args.max_steps < 1:
        parser.error("--max-steps must be at least 1")

    try:
        status = args.handler(args)
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_USAGE
    logger.info(f"{args.command} finished with exit status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
