"""Command-line entry point: ``simulate``, ``synthesize``, ``check`` and ``compare``.

Every subcommand takes ``--config FILE``; without it the bundled case study
is used.  Any module error ends the process with a nonzero status and a
one-line reason on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, bundled_config, parse_config
from .constraints import (
    ObstacleBox, ObstacleConstraint, attach_certificates, certify_linear, embed_obstacle,
    joint_limit_constraints,
)
from .crane_model import CraneParams
from .erg import ConstraintSet, GovernorParams, dsm
from .linearize import linearize
from .simulator import Reference, Scenario, TrajectoryLog, metrics, run_scenario
from .synthesis import lqr_gain

log = logging.getLogger("erg_crane")


@dataclass
class System:
    """Everything a run needs, assembled from a :class:`Config`."""

    config: Config
    params: CraneParams
    K: np.ndarray
    Acl: np.ndarray
    riccati_residual: float
    boxes: list
    obstacles: list
    cs: ConstraintSet
    gp: GovernorParams
    scenario: Scenario


def build_system(cfg: Config) -> System:
    p = cfg.crane.params()
    model = linearize(cfg.lqr.operating_point, p)
    if cfg.lqr.gain == "lqr":
        K, _, res, _ = lqr_gain(model, np.diag(cfg.lqr.q_diag), np.diag(cfg.lqr.r_diag),
                                K0=np.array(cfg.lqr.K), return_info=True)
    else:
        K, res = np.array(cfg.lqr.K), float("nan")
    Acl = model.A - model.B @ K

    c = cfg.constraints
    cert_kw = dict(decay_rate=c.decay_rate, refine_steps=c.refine_steps)
    linear = joint_limit_constraints(c.theta3_min, c.theta3_max, c.swing_max)
    linear_certs = certify_linear(linear, Acl, **cert_kw)
    boxes, obstacles = [], []
    for ob in cfg.obstacles:
        box = ObstacleBox(ob.center, ob.half_extents, ob.label, ob.margin)
        boxes.append(box)
        oc = embed_obstacle(box, p, grid_n=c.grid_n, n_t=c.n_t)
        if oc is not None:
            obstacles.append(attach_certificates(oc, Acl, **cert_kw))
    cs = ConstraintSet(linear, linear_certs, obstacles)

    e = cfg.erg
    gp = GovernorParams(k=e.k, eta=e.eta, zeta=e.zeta, delta=e.delta, Ts=e.Ts, omega=e.omega)
    sc = cfg.scenario
    scenario = Scenario(
        x0=sc.x0,
        references=[Reference(r.r, r.switch, r.value) for r in sc.references],
        duration=sc.duration,
        dt_int=cfg.integration.dt_int,
    )
    return System(cfg, p, K, Acl, res, boxes, obstacles, cs, gp, scenario)


def simulate(system: System, governed: bool = True) -> TrajectoryLog:
    return run_scenario(system.scenario, system.K, system.cs, system.gp, system.params,
                        governed=governed)


# ------------------------------------------------------------------ output

def format_metrics(m) -> str:
    return "".join(f"{k} = {v:.10g}\n" for k, v in m.as_dict().items())


def gnuplot_script(csv_name: str) -> str:
    return f"""set datafile separator ','
set key autotitle columnhead
set multiplot layout 3,1
set ylabel 'swing [rad]'
plot '{csv_name}' using 1:2 with lines, '' using 1:3 with lines
set ylabel 'boom [rad]'
plot '{csv_name}' using 1:4 with lines, '' using 1:5 with lines, \\
     '' using 1:10 with lines dt 2, '' using 1:11 with lines dt 2
set ylabel 'DSM'
set xlabel 't [s]'
plot '{csv_name}' using 1:16 with lines
unset multiplot
pause mouse close
"""


def write_run(trajectory: TrajectoryLog, out: Path, stem: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    trajectory.write_csv(out / f"{stem}.csv")
    (out / f"{stem}_metrics.txt").write_text(format_metrics(metrics(trajectory)))
    (out / f"{stem}.gp").write_text(gnuplot_script(f"{stem}.csv"))


def obstacle_rows(obstacles: list[ObstacleConstraint]) -> list[str]:
    """CSV rows ``label,kind,index,a,b,c``: hull vertices ``(th3, th4)`` and
    tangent lines ``n3*th3 + n4*th4 = offset`` with the obstacle on the low side."""
    rows = ["label,kind,index,a,b,c"]
    for oc in obstacles:
        for i, (t3, t4) in enumerate(oc.hull):
            rows.append(f"{oc.label},hull,{i},{t3:.17g},{t4:.17g},")
        for i, (n, (_, d)) in enumerate(zip(oc.normals, oc.halfplanes)):
            rows.append(f"{oc.label},tangent,{i},{n[0]:.17g},{n[1]:.17g},{-d:.17g}")
    return rows


def audit(system: System) -> list[str]:
    """Static admissibility of the start state and every reference.

    Returns a list of problems (empty when everything is admissible).
    """
    cs, problems = system.cs, []
    x0 = system.scenario.x0
    v0 = x0[2:4]
    if cs.steady_admissible_margin(v0) <= 0.0 or dsm(x0, v0, cs, system.gp).raw < 0.0:
        problems.append("initial state inadmissible")
    for i, ref in enumerate(system.scenario.references):
        s = cs.steady_admissible_margin(ref.r)
        if s <= 0.0:
            problems.append(f"reference inadmissible: r{i + 1} = "
                            f"[{ref.r[0]:.6g}, {ref.r[1]:.6g}] rad (margin {s:.3e})")
    return problems


# --------------------------------------------------------------- commands

def _load(args) -> Config:
    return parse_config(args.config) if args.config else bundled_config()


def cmd_simulate(args) -> int:
    system = build_system(_load(args))
    governed = not args.baseline
    trajectory = simulate(system, governed=governed)
    stem = "trajectory" if governed else "baseline"
    write_run(trajectory, Path(args.out), stem)
    sys.stdout.write(format_metrics(metrics(trajectory)))
    return 0


def cmd_synthesize(args) -> int:
    system = build_system(_load(args))
    out = sys.stdout
    out.write(f"gain_source = {system.config.lqr.gain}\n")
    for i, row in enumerate(system.K):
        out.write(f"K[{i}] = " + " ".join(f"{v:.10g}" for v in row) + "\n")
    out.write(f"riccati_residual = {system.riccati_residual:.3e}\n")
    eig = np.linalg.eigvals(system.Acl)
    out.write(f"closed_loop_max_real_eig = {eig.real.max():.6g}\n")
    out.write("certificate, lyap_residual_max_eig, floor_margin_min_eig, valid\n")
    certs = list(system.cs.linear_certs)
    for oc in system.obstacles:
        certs.extend(oc.certificates)
    for c in certs:
        out.write(f"{c.constraint_id}, {c.lyap_residual_max_eig:.6e}, "
                  f"{c.floor_margin_min_eig:.6e}, {c.valid}\n")
    return 0 if all(c.valid for c in certs) else 1


def cmd_check(args) -> int:
    system = build_system(_load(args))
    rows = "\n".join(obstacle_rows(system.obstacles)) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "obstacles.csv").write_text(rows)
    else:
        sys.stdout.write(rows)
    for box in system.boxes:
        if box.label not in {oc.label for oc in system.obstacles}:
            log.warning("obstacle %r is out of reach", box.label)
    problems = audit(system)
    if problems:
        sys.stderr.write(f"erg-crane: {problems[0]}\n")
        return 2
    print("# audit passed: initial state and all references admissible")
    return 0


def cmd_compare(args) -> int:
    system = build_system(_load(args))
    out = Path(args.out)
    governed = simulate(system, governed=True)
    baseline = simulate(system, governed=False)
    write_run(governed, out, "governed")
    write_run(baseline, out, "baseline")
    mg, mb = metrics(governed).as_dict(), metrics(baseline).as_dict()
    lines = [f"{'metric':<18}{'governed':>16}{'ungoverned':>16}"]
    for key in list(mg) + [k for k in mb if k not in mg]:
        lines.append(f"{key:<18}{mg.get(key, math.nan):>16.6g}{mb.get(key, math.nan):>16.6g}")
    bound = system.config.constraints.swing_max
    lines.append(f"{'swing_bound':<18}{bound:>16.6g}{bound:>16.6g}")
    if mb["max_swing"] <= bound:
        lines.append("note: the ungoverned run stays within the swing bound; "
                     "stiffer LQR weights are needed to show the difference")
    table = "\n".join(lines) + "\n"
    (out / "compare.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erg-crane",
                                     description="Reference-governed boom crane simulation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, out=None):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="TOML scenario file (default: bundled case study)")
        if out is not None:
            p.add_argument("--out", required=out, help="output directory")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "run one scenario and write CSV + metrics", out=True)
    p.add_argument("--baseline", action="store_true",
                   help="run the ungoverned LQR baseline instead of the governed loop")
    add("synthesize", cmd_synthesize, "print the gain and every level-set certificate")
    add("check", cmd_check, "dump obstacle embeddings and audit admissibility", out=False)
    add("compare", cmd_compare, "run governed and ungoverned, write a paired table", out=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        sys.stderr.write(f"erg-crane: {type(exc).__name__}: {reason}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
