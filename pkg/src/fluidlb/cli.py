"""Command-line interface.

Subcommands: feasibility, equilibrium, simulate, plot, verify.  Exit codes
are part of the contract: 0 success, 1 unparseable input, 2 infeasible
scenario, 3 step-size/stability rejection, 4 property-suite failure, and 5
for solver or runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .equilibrium import (
    DualAscentError,
    solve_equilibrium,
)
from .io import (
    FileFormatError,
    load_scenario,
    read_trajectory_csv,
    write_lines,
    write_manifest,
    write_trajectory_csv,
)
from .model import (
    InfeasibleError,
    Scenario,
    check_feasibility,
    compute_costs,
    scenario_hash,
    scenario_with_capacities,
    zero_state,
)
from .proximal import (
    SaddleConvergenceError,
    lyapunov_distance,
    proximal_rates,
    solve_saddle,
    verify_saddle_kkt,
)
from .simulate import (
    StabilityError,
    detect_equilibrium,
    integrate,
    integrate_delayed,
    monitor_lyapunov,
)
from .verify import DEFAULT_SEED, run_property_suite

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INFEASIBLE = 2
EXIT_STABILITY = 3
EXIT_PROPERTY = 4
EXIT_RUNTIME = 5


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 means infeasible here, so
    # remap argument problems to the parse-error code.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(message)


class SystemExit2(Exception):
    pass


def _fmt_vec(v) -> str:
    return np.array2string(np.asarray(v, dtype=float), precision=6, separator=", ",
                           suppress_small=True)


def _fmt_mat(x) -> str:
    return np.array2string(np.asarray(x, dtype=float), precision=6, separator=", ",
                           suppress_small=True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_feasibility(args) -> int:
    s = load_scenario(args.scenario)
    rep = check_feasibility(s)
    word = "feasible" if rep.feasible else "infeasible"
    print(f"{word}, slack = {rep.slack:.6g}")
    print(f"strictly feasible: {'yes' if rep.strictly_feasible else 'no'}")
    shrunk_word = "feasible" if rep.feasible_shrunk else "infeasible"
    print(f"shrunk capacities: {shrunk_word}, slack = {rep.slack_shrunk:.6g}")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def _equilibrium_myopic(s: Scenario, shrunk: bool):
    target = scenario_with_capacities(s, s.ctilde) if shrunk else s
    rep = solve_equilibrium(target)
    lines = [
        f"policy: myopic (dual solve{', shrunk capacities' if shrunk else ''})",
        f"multipliers mu*: {_fmt_vec(rep.mu_star)}",
        f"routing rates x*:\n{_fmt_mat(rep.x_star)}",
        f"equilibrium queues q*: {_fmt_vec(rep.q_star)}",
        f"dual value: {rep.dual_value:.6g}",
        f"setup cost: {rep.costs.setup_cost:.6g}",
        f"entropy penalty: {rep.costs.entropy_penalty:.6g}",
        f"total cost: {rep.costs.total:.6g}",
        f"unique: {'yes' if rep.unique else 'no'}",
        f"kkt residuals: primal {rep.kkt.primal_infeas:.3e}, dual {rep.kkt.dual_infeas:.3e}, "
        f"complementarity {rep.kkt.comp_slack:.3e}, stationarity {rep.kkt.stationarity:.3e}",
    ]
    kv = []
    for j, v in enumerate(rep.mu_star):
        kv.append((f"mu_{j + 1}", v))
    for j, v in enumerate(rep.q_star):
        kv.append((f"q_{j + 1}", v))
    for i in range(s.m):
        for j in range(s.n):
            kv.append((f"x_{i + 1}_{j + 1}", rep.x_star[i, j]))
    kv += [
        ("dual_value", rep.dual_value),
        ("setup_cost", rep.costs.setup_cost),
        ("entropy_penalty", rep.costs.entropy_penalty),
        ("total_cost", rep.costs.total),
        ("kkt_primal", rep.kkt.primal_infeas),
        ("kkt_dual", rep.kkt.dual_infeas),
        ("kkt_comp", rep.kkt.comp_slack),
        ("kkt_stationarity", rep.kkt.stationarity),
        ("unique", int(rep.unique)),
    ]
    return lines, kv


def _equilibrium_proximal(s: Scenario, shrunk: bool):
    capacities = s.ctilde if shrunk else s.c
    Z, nu = solve_saddle(s, capacities)
    x = proximal_rates(Z, nu, s)
    q = (s.gamma * Z).sum(axis=0)
    costs = compute_costs(x, s)
    kkt = verify_saddle_kkt(Z, nu, s, capacities)
    lines = [
        f"policy: proximal (saddle flow, {'shrunk capacities' if shrunk else 'full capacities'})",
        f"multipliers nu*: {_fmt_vec(nu)}",
        f"setup queues Z*:\n{_fmt_mat(Z)}",
        f"routing rates x*:\n{_fmt_mat(x)}",
        f"equilibrium queues q*: {_fmt_vec(q)}",
        f"queues below capacity: {'yes' if bool(np.all(q < s.c)) else 'no'}",
        f"setup cost: {costs.setup_cost:.6g}",
        f"kkt residuals: primal {kkt.primal_infeas:.3e}, dual {kkt.dual_infeas:.3e}, "
        f"complementarity {kkt.comp_slack:.3e}, stationarity {kkt.stationarity:.3e}",
    ]
    kv = []
    for j, v in enumerate(nu):
        kv.append((f"nu_{j + 1}", v))
    for j, v in enumerate(q):
        kv.append((f"q_{j + 1}", v))
    for i in range(s.m):
        for j in range(s.n):
            kv.append((f"z_{i + 1}_{j + 1}", Z[i, j]))
    for i in range(s.m):
        for j in range(s.n):
            kv.append((f"x_{i + 1}_{j + 1}", x[i, j]))
    kv += [
        ("setup_cost", costs.setup_cost),
        ("kkt_primal", kkt.primal_infeas),
        ("kkt_dual", kkt.dual_infeas),
        ("kkt_comp", kkt.comp_slack),
        ("kkt_stationarity", kkt.stationarity),
    ]
    return lines, kv


def cmd_equilibrium(args) -> int:
    s = load_scenario(args.scenario)
    if args.policy == "myopic":
        lines, kv = _equilibrium_myopic(s, args.shrunk)
    else:
        lines, kv = _equilibrium_proximal(s, args.shrunk)
    print("\n".join(lines))
    if args.out:
        prefix = Path(args.out)
        txt = prefix.parent / f"{prefix.name}_equilibrium.txt"
        csv_path = prefix.parent / f"{prefix.name}_equilibrium.csv"
        write_lines(txt, lines)
        with open(csv_path, "w", newline="") as fh:
            fh.write("key,value\n")
            for key, value in kv:
                fh.write(f"{key},{repr(float(value))}\n")
        manifest = prefix.parent / f"{prefix.name}_manifest.json"
        write_manifest(
            manifest,
            tool="fluidlb",
            version=__version__,
            subcommand="equilibrium",
            scenario=str(Path(args.scenario).resolve()),
            scenario_hash=scenario_hash(s),
            policy=args.policy,
            shrunk=args.shrunk,
            outputs=[str(txt), str(csv_path)],
            argv=args._argv,
        )
        print(f"wrote {txt} and {csv_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = load_scenario(args.scenario)
    state0 = zero_state(s, args.policy)
    if args.policy == "myopic-delayed":
        traj = integrate_delayed(state0, s, args.dt, args.T, stride=args.stride)
    else:
        traj = integrate(args.policy, state0, s, args.dt, args.T, stride=args.stride)

    eq_state = detect_equilibrium(traj, s, tol=1e-3, window=min(5.0, args.T / 2))
    lyap_override = None
    summary = [
        f"policy: {traj.policy}",
        f"dt: {traj.dt}  T: {args.T}  recorded steps: {len(traj)}",
        f"final t: {traj.times[-1]:.6g}",
        f"final q: {_fmt_vec(traj.qs[-1])}",
        f"final rates:\n{_fmt_mat(traj.rates[-1])}",
        f"final setup cost: {traj.setup_costs[-1]:.6g}",
        f"equilibrium detected: {'yes' if eq_state is not None else 'no'} "
        f"(field norm < 1e-3 over trailing window)",
    ]
    if traj.policy == "proximal":
        below = bool(np.all(traj.qs[-1] < s.c))
        summary.append(f"final queues below capacity: {'yes' if below else 'no'}")
        if eq_state is not None:
            mon = monitor_lyapunov(traj, s, "saddle_distance",
                                   reference=(eq_state.Z, eq_state.nu))
            summary.append(
                f"lyapunov monitor (saddle_distance, {mon.direction}): "
                f"{mon.violations} violation(s) beyond 1e-06, worst {mon.worst_violation:.3e}"
            )
            lyap_override = np.array([
                lyapunov_distance(traj.Zs[k], traj.nus[k], eq_state.Z, eq_state.nu)
                for k in range(len(traj))
            ])
        else:
            summary.append("lyapunov monitor: skipped (no converged reference saddle)")
    else:
        mon = monitor_lyapunov(traj, s, "dual_of_mu")
        label = "informational only" if traj.policy == "myopic-delayed" else "guaranteed"
        summary.append(
            f"lyapunov monitor (dual_of_mu, {mon.direction}, {label}): "
            f"{mon.violations} violation(s) beyond 1e-06, worst {mon.worst_violation:.3e}"
        )
    if traj.policy == "myopic-delayed":
        summary.append("convergence: not asserted (delayed arrivals can sustain oscillation)")

    prefix = Path(args.out)
    csv_path = prefix.parent / f"{prefix.name}_trajectory.csv"
    summary_path = prefix.parent / f"{prefix.name}_summary.txt"
    manifest_path = prefix.parent / f"{prefix.name}_manifest.json"
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(csv_path, traj, lyapunov=lyap_override)
    write_lines(summary_path, summary)
    write_manifest(
        manifest_path,
        tool="fluidlb",
        version=__version__,
        subcommand="simulate",
        scenario=str(Path(args.scenario).resolve()),
        scenario_hash=scenario_hash(s),
        policy=args.policy,
        dt=args.dt,
        T=args.T,
        stride=args.stride,
        outputs=[str(csv_path), str(summary_path)],
        argv=args._argv,
    )
    print("\n".join(summary))
    print(f"wrote {csv_path}")
    return EXIT_OK


def _capacities_for_plot(args, data) -> np.ndarray:
    if args.scenario:
        return load_scenario(args.scenario).c
    csv_path = Path(args.trajectory)
    name = csv_path.name
    if name.endswith("_trajectory.csv"):
        manifest = csv_path.parent / (name[: -len("_trajectory.csv")] + "_manifest.json")
        if manifest.exists():
            import json

            meta = json.loads(manifest.read_text())
            return load_scenario(meta["scenario"]).c
    raise FileFormatError(
        "queue plots need capacities: pass --scenario or keep the run manifest "
        "next to the trajectory CSV"
    )


def cmd_plot(args) -> int:
    from . import plots

    data = read_trajectory_csv(args.trajectory)
    out = args.out or str(Path(args.trajectory).with_suffix("")) + f"_{args.kind}.svg"
    if args.kind == "rates":
        plots.plot_rates(data, out)
    else:
        plots.plot_queues(data, _capacities_for_plot(args, data), out)
    write_manifest(
        Path(out).with_suffix(".manifest.json"),
        tool="fluidlb",
        version=__version__,
        subcommand="plot",
        trajectory=str(Path(args.trajectory).resolve()),
        kind=args.kind,
        outputs=[str(out)],
        argv=args._argv,
    )
    print(f"wrote {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    s = load_scenario(args.scenario)
    results = run_property_suite(s, seed=args.seed, corrupt=args.self_test_corrupt)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name} ({r.cases} cases): {r.detail}")
    if failed:
        print(f"property failed: {failed[0].name}", file=sys.stderr)
        return EXIT_PROPERTY
    print(f"all {len(results)} properties passed (seed {args.seed})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluidlb",
                     description="Fluid load balancing across heterogeneous server pools.")
    parser.add_argument("--version", action="version", version=f"fluidlb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feasibility", help="check aggregate demand against capacity")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("equilibrium", help="solve for the equilibrium operating point")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=["myopic", "proximal"], default="myopic")
    p.add_argument("--shrunk", action="store_true",
                   help="target the shrunk capacities ctilde instead of c")
    p.add_argument("--out", default=None, help="output file prefix")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("simulate", help="integrate the dynamics and record a trajectory")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=["myopic", "proximal", "myopic-delayed"],
                   default="myopic")
    p.add_argument("--dt", type=float, default=0.001)
    p.add_argument("--T", type=float, default=60.0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", required=True, help="output file prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="render a recorded trajectory to SVG")
    p.add_argument("trajectory")
    p.add_argument("--kind", choices=["rates", "queues"], required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--scenario", default=None,
                   help="scenario file for capacity lines (else taken from the run manifest)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("verify", help="run the randomized property suite")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--self-test-corrupt", choices=["gradient"], default=None,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args._argv = argv
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    except (DualAscentError, SaddleConvergenceError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
