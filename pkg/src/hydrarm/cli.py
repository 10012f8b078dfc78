"""``hydrarm`` command-line tool.

Stages hand off through files in the output directory::

    simulate-cylinder -> cylinders/*.csv
    identify-friction -> friction.json, friction_curves/*.csv
    design-trajectory -> trajectory.json, trajectory.csv, design.json
    identify-dynamics -> identification.json, mapping.json, residuals/*.csv
    report            -> summary.md, base_parameters.csv

Stage timings go to stderr so that every written file depends only on the
configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from hydrarm import io, testbed
from hydrarm.excitation import (OMEGA_SLOW, FourierTrajectory, check_constraints,
                                condition_number, optimize_trajectory, table3_trajectory)
from hydrarm.friction import RankDeficientError, identify_cylinder, stribeck_curve
from hydrarm.hydraulics import DEFAULT_NOISE, DEFAULT_RATE, Excitation, simulate_cylinder
from hydrarm.model import load_model
from hydrarm.pipeline import (DEFAULT_TORQUE_NOISE, PipelineConfig, StageError, run_pipeline,
                              simulate_arm_run)
from hydrarm.reduction import BaseParamMapping, reduce_model

log = logging.getLogger("hydrarm")

DEFAULT_OUT = "hydrarm_out"
MIN_BUDGET = 100


class CommandError(RuntimeError):
    """A user-facing failure; the message is printed and the exit status is 1."""


class Settings:
    """Option lookup: explicit flag, then config-file section, then default."""

    def __init__(self, args, config: dict, section: str):
        self.args = args
        self.config = config
        self.section = config.get(section, {}) if isinstance(config.get(section, {}), dict) else {}
        self.used: dict = {}

    def get(self, name: str, default=None):
        val = getattr(self.args, name, None)
        if val is None:
            val = self.section.get(name, default)
        self.used[name] = val
        return val


def _out_dir(args, config) -> Path:
    out = args.out or config.get("out") or os.environ.get("HYDRARM_DATA_DIR") or DEFAULT_OUT
    return Path(out)


def _seed(args, config) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(config.get("seed", 0))


def _model(config, config_dir: Path | None):
    src = config.get("model")
    if isinstance(src, str) and not src.lstrip().startswith("{") and config_dir is not None:
        p = Path(src)
        src = p if p.is_absolute() else config_dir / p
    return load_model(src)


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _timed(name: str):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            print(f"[time] {name}: {time.perf_counter() - self.t0:.3f} s", file=sys.stderr)
            return False
    return _T()


def _fmt_table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# simulate-cylinder ---------------------------------------------------------

def cmd_simulate_cylinder(args, config, ctx) -> int:
    st = Settings(args, config, "simulate-cylinder")
    scale = float(st.get("noise", 1.0))
    if scale < 0:
        raise CommandError("--noise must be non-negative")
    rate = float(st.get("rate", DEFAULT_RATE))
    periods = float(st.get("periods", 3.0))
    if rate <= 0 or periods <= 0:
        raise CommandError("rate and periods must be positive")
    joints = _parse_joints(st.get("joints", "1,2,3,4,5,6"))
    tones = st.get("second_tone", None)
    exc = Excitation()
    if tones:
        amp, omega = (float(v) for v in str(tones).split(","))
        exc = Excitation(exc.amplitudes + (amp,), exc.omegas + (omega,))
    noise = {k: v * scale for k, v in DEFAULT_NOISE.items()} if scale > 0 else {}
    out = ctx["out"] / "cylinders"
    settings = {"command": "simulate-cylinder", "seed": ctx["seed"], "noise": noise,
                "rate": rate, "periods": periods, "excitation": exc.to_dict()}
    fp = io.fingerprint(settings)
    for j in joints:
        p = testbed.cylinder_params(j)
        run = simulate_cylinder(p, excitation=exc, dt=1.0 / rate, noise=noise,
                                seed=_sub_seed(ctx["seed"], j), periods=periods)
        meta = {"joint": j, "config_fingerprint": fp, "seed": ctx["seed"], "noise": noise,
                "rate_hz": rate, "periods": periods, "excitation": exc.to_dict(),
                "cylinder": {"m": p.m, "c": p.c, "K": p.K, "A1": p.A1, "A2": p.A2,
                             "fc": p.friction.fc, "fv": p.friction.fv, "fs": p.friction.fs}}
        path = io.write_cylinder_csv(out / f"cylinder_j{j}.csv", run, meta)
        print(f"joint {j}: {len(run)} samples -> {path}")
    return 0


def _parse_joints(spec) -> list[int]:
    if isinstance(spec, (list, tuple)):
        joints = [int(v) for v in spec]
    else:
        joints = [int(v) for v in str(spec).split(",") if v.strip()]
    if not joints or any(not 1 <= j <= 6 for j in joints):
        raise CommandError(f"joints must be in 1..6, got {spec!r}")
    return joints


# identify-friction ---------------------------------------------------------

def cmd_identify_friction(args, config, ctx) -> int:
    st = Settings(args, config, "identify-friction")
    estimator = st.get("estimator", "both")
    src = Path(st.get("input", None) or ctx["out"] / "cylinders")
    free_mass = bool(st.get("free_mass", False))
    files = sorted(src.glob("cylinder_j*.csv")) if src.is_dir() else [src]
    if not files:
        raise CommandError(f"no cylinder_j*.csv record files in {src}")
    estimators = ("batch", "rls") if estimator == "both" else (estimator,)

    results, errors = [], []
    for f in files:
        run = io.read_cylinder_csv(f)
        cyl = run.meta.get("cylinder")
        joint = int(run.meta.get("joint", _joint_from_name(f)))
        if cyl is None:
            p = testbed.cylinder_params(joint)
            cyl = {"m": p.m, "c": p.c, "A1": p.A1, "A2": p.A2}
        entry = {"joint": joint, "source": f.name}
        try:
            for est in estimators:
                res = identify_cylinder(run, cyl["c"], cyl["A1"], cyl["A2"],
                                        fix_mass=None if free_mass else cyl["m"], estimator=est)
                entry[est] = res.to_dict()
        except (RankDeficientError, np.linalg.LinAlgError, ValueError) as exc:
            errors.append(f"joint {joint}: {exc}")
            continue
        chosen = entry[estimators[0]]
        entry["selected"] = {"estimator": estimators[0], "fc": chosen["fc"], "fv": chosen["fv"],
                             "fs": chosen["fs"]}
        if len(estimators) == 2:
            a = np.array([entry["batch"][k] for k in ("fc", "fv", "fs")])
            b = np.array([entry["rls"][k] for k in ("fc", "fv", "fs")])
            entry["batch_rls_max_rel_diff"] = float(np.max(np.abs(a - b) / np.abs(a)))
        if "fc" in cyl:
            entry["planted"] = {k: cyl[k] for k in ("fc", "fv", "fs")}
        vmax = float(np.max(np.abs(run.dx))) or 1e-3
        v = np.linspace(-vmax, vmax, 201)
        curve = stribeck_curve(_linear(entry["selected"]), v)
        io.write_curve_csv(ctx["out"] / "friction_curves" / f"curve_j{joint}.csv",
                           [c[0] for c in curve], [c[1] for c in curve],
                           {"joint": joint, "estimator": estimators[0]})
        results.append(entry)

    if errors:
        raise CommandError("friction identification failed:\n  " + "\n  ".join(errors))
    results.sort(key=lambda e: e["joint"])
    doc = {"command": "identify-friction", "seed": ctx["seed"], "estimators": list(estimators),
           "mass_fixed": not free_mass, "joints": results,
           "config_fingerprint": io.fingerprint({"estimator": estimator, "free_mass": free_mass,
                                                 "inputs": [f.name for f in files]})}
    io.write_json(ctx["out"] / "friction.json", doc)
    rows = [(e["joint"], f"{e['selected']['fc']:.4f}", f"{e['selected']['fv']:.4f}",
             f"{e['selected']['fs']:.4f}") for e in results]
    print(_fmt_table(("joint", "fc [N]", "fv [N s/m]", "fs [N (s/m)^1/3]"), rows))
    return 0


def _joint_from_name(f: Path) -> int:
    digits = "".join(ch for ch in f.stem.rsplit("j", 1)[-1] if ch.isdigit())
    if not digits:
        raise CommandError(f"cannot infer joint index from {f.name}")
    return int(digits)


def _linear(d):
    from hydrarm.hydraulics import LinearStribeck
    return LinearStribeck(d["fc"], d["fv"], d["fs"])


def _friction_table(path: Path) -> np.ndarray:
    doc = io.read_json(path)
    by_joint = {e["joint"]: e["selected"] for e in doc["joints"]}
    missing = [j for j in range(1, 7) if j not in by_joint]
    if missing:
        raise CommandError(f"{path.name} lacks friction results for joints {missing}")
    return np.array([[by_joint[j][k] for k in ("fc", "fv", "fs")] for j in range(1, 7)])


# design-trajectory ---------------------------------------------------------

def cmd_design_trajectory(args, config, ctx) -> int:
    st = Settings(args, config, "design-trajectory")
    model = ctx["model"]
    mapping = reduce_model(model)
    preset = st.get("preset", None)
    rate = float(st.get("rate", DEFAULT_RATE))
    boundary = st.get("boundary", "offset")
    if rate <= 0:
        raise CommandError("rate must be positive")
    if preset == "table3":
        traj = table3_trajectory()
        report = check_constraints(traj, model.limits, boundary=boundary)
        kappa = condition_number(model, mapping, traj)
        design = {"preset": "table3", "kappa": kappa, "feasible": report.feasible,
                  "constraints": report.to_dict(), "n_harmonics": traj.n_harmonics,
                  "n_params_full": traj.n_joints * (2 * traj.n_harmonics + 1)}
    elif preset is not None:
        raise CommandError(f"unknown preset {preset!r}")
    else:
        nH = int(st.get("nH", 3))
        budget = int(st.get("budget", 400))
        if budget < MIN_BUDGET:
            raise CommandError(f"budget must be at least {MIN_BUDGET}")
        omega = float(st.get("omega", OMEGA_SLOW))
        try:
            res = optimize_trajectory(model, mapping, omega_f=omega, n_harmonics=nH,
                                      seed=ctx["seed"], budget=budget, boundary=boundary)
        except RuntimeError as exc:
            raise CommandError(str(exc)) from None
        traj, kappa = res.trajectory, res.kappa
        design = {"preset": None, "kappa": kappa, "feasible": res.report.feasible,
                  "constraints": res.report.to_dict(), "n_harmonics": nH,
                  "n_params_full": res.n_params_full, "n_params_free": res.n_params_free,
                  "evaluations": res.evaluations, "history": res.history, "budget": budget,
                  "omega_f": omega, "boundary": boundary}
    design["seed"] = ctx["seed"]
    design["config_fingerprint"] = io.fingerprint({k: v for k, v in design.items()
                                                   if k in ("preset", "n_harmonics", "budget",
                                                            "omega_f", "boundary", "seed")})
    out = ctx["out"]
    io.write_json(out / "trajectory.json", traj.to_dict())
    io.write_json(out / "design.json", design)
    io.write_json(out / "mapping.json", mapping.to_dict())
    n = max(2, int(round(traj.period * rate)))
    t, q, dq, ddq = traj.sample(n)
    io.write_trajectory_csv(out / "trajectory.csv", t, q, dq, ddq,
                            {"rate_hz": rate, "config_fingerprint": design["config_fingerprint"]})
    print(f"parameters before boundary elimination: {design['n_params_full']}")
    print(f"condition number: {kappa:.6g}")
    print(f"feasible: {design['feasible']}")
    for v in design["constraints"]["violations"][:10]:
        print(f"  violation: {v}")
    return 0


# identify-dynamics ---------------------------------------------------------

def cmd_identify_dynamics(args, config, ctx) -> int:
    st = Settings(args, config, "identify-dynamics")
    out = ctx["out"]
    model = ctx["model"]
    simulate = bool(st.get("simulate", False))
    noise = float(st.get("noise", DEFAULT_TORQUE_NOISE))
    rate = float(st.get("rate", DEFAULT_RATE))
    skip = bool(st.get("skip_friction", False))
    if noise < 0 or rate <= 0:
        raise CommandError("noise must be non-negative and rate positive")

    if skip:
        friction = np.zeros((model.n_joints, 3))
    else:
        fpath = Path(st.get("friction", None) or out / "friction.json")
        if not fpath.exists():
            raise CommandError(f"friction results not found at {fpath}; run identify-friction "
                               "first or pass --skip-friction")
        friction = _friction_table(fpath)

    mpath = out / "mapping.json"
    mapping = BaseParamMapping.from_dict(io.read_json(mpath)) if mpath.exists() else None
    dataset_path = st.get("dataset", None)
    if simulate:
        tpath = Path(st.get("trajectory", None) or out / "trajectory.json")
        if not tpath.exists():
            raise CommandError(f"trajectory not found at {tpath}; run design-trajectory first")
        traj = FourierTrajectory.load(tpath)
        truth = testbed.ground_truth_links(model)
        try:
            ds = simulate_arm_run(model, truth, traj, rate, noise, _sub_seed(ctx["seed"], 99))
        except ValueError as exc:
            raise CommandError(f"[simulate] {exc}") from None
        io.write_dataset_csv(out / "dataset.csv", ds, {"seed": ctx["seed"], "torque_noise": noise,
                                                      "rate_hz": rate})
    elif dataset_path:
        ds = io.read_dataset_csv(dataset_path)
        truth = None
    else:
        raise CommandError("no data: pass --simulate or --dataset PATH")

    cfg = PipelineConfig(model=model, ground_truth=truth, dataset=ds, friction=friction,
                         mapping=mapping, rate=rate, torque_noise=noise, seed=ctx["seed"])
    try:
        rep = run_pipeline(cfg)
    except StageError as exc:
        raise CommandError(str(exc)) from None
    if skip:
        rep.friction_source = "skipped"
    for name, secs in rep.timings.items():
        print(f"[time] {name}: {secs:.3f} s", file=sys.stderr)

    doc = rep.to_dict()
    doc["seed"] = ctx["seed"]
    doc["config_fingerprint"] = io.fingerprint({"simulate": simulate, "noise": noise,
                                                "rate": rate, "skip_friction": skip,
                                                "seed": ctx["seed"]})
    io.write_json(out / "identification.json", doc)
    io.write_json(out / "mapping.json", rep.mapping.to_dict())
    for j in range(model.n_joints):
        io.write_residual_csv(out / "residuals" / f"residual_j{j + 1}.csv", rep.t,
                              rep.measured[:, j], rep.predicted[:, j], {"joint": j + 1})

    print(_fmt_table(("joint", "rsd", "rms [N m]"),
                     [(j + 1, f"{r:.4g}", f"{a:.4g}")
                      for j, (r, a) in enumerate(zip(rep.rsd, rep.rsd_abs))]))
    print()
    rows = []
    for k, lab in enumerate(rep.labels):
        row = [k + 1, lab, f"{rep.beta_hat[k]:.6g}"]
        if rep.beta_true is not None:
            row.append(f"{rep.beta_true[k]:.6g}")
        rows.append(row)
    head = ["#", "base parameter", "estimate"] + (["planted"] if rep.beta_true is not None else [])
    print(_fmt_table(head, rows))
    return 0


# report --------------------------------------------------------------------

STAGES = (
    ("friction", "friction.json", "identify-friction"),
    ("design", "design.json", "design-trajectory"),
    ("reduction", "mapping.json", "design-trajectory or identify-dynamics"),
    ("identification", "identification.json", "identify-dynamics"),
)


def _version(pkg: str) -> str:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return "unknown"


def cmd_report(args, config, ctx) -> int:
    out = ctx["out"]
    docs = {name: io.read_json(out / fn) for name, fn, _ in STAGES if (out / fn).exists()}
    missing = [(name, fn, cmd) for name, fn, cmd in STAGES if name not in docs]
    if not docs:
        raise CommandError("no stage outputs in " + str(out) + "; missing: " +
                           ", ".join(fn for _, fn, _ in missing))
    md = ["# hydrarm identification summary", ""]
    md += ["## Run details", ""]
    md += [f"- hydrarm {_version('hydrarm')}, numpy {_version('numpy')}, "
           f"scipy {_version('scipy')}"]
    for name in docs:
        d = docs[name]
        if "config_fingerprint" in d or "seed" in d:
            md.append(f"- {name}: seed {d.get('seed', 'n/a')}, "
                      f"config {d.get('config_fingerprint', 'n/a')[:16]}")
    md.append("")
    if missing:
        md += ["## Missing stages", ""]
        md += [f"- {name}: MISSING ({fn} not found; run `hydrarm {cmd}`)" for name, fn, cmd in missing]
        md.append("")

    if "friction" in docs:
        md += ["## Friction parameters", "", "| joint | fc | fv | fs | estimator |",
               "|---|---|---|---|---|"]
        for e in docs["friction"]["joints"]:
            s = e["selected"]
            md.append(f"| {e['joint']} | {s['fc']:.4f} | {s['fv']:.4f} | {s['fs']:.4f} "
                      f"| {s['estimator']} |")
        md.append("")
    if "design" in docs:
        d = docs["design"]
        md += ["## Excitation trajectory", "",
               f"- preset: {d.get('preset') or 'optimized'}",
               f"- condition number: {d['kappa']:.6g}",
               f"- feasible: {d['feasible']}",
               f"- parameters before boundary elimination: {d['n_params_full']}", ""]
    if "identification" in docs:
        d = docs["identification"]
        md += ["## Base parameters", "", "| # | parameter | estimate | planted |",
               "|---|---|---|---|"]
        for p in d["base_parameters"]:
            planted = f"{p['planted']:.6g}" if "planted" in p else "-"
            md.append(f"| {p['index']} | {p['label']} | {p['estimate']:.6g} | {planted} |")
        md += ["", "## Torque residuals", "", "| joint | rsd | rms [N m] |", "|---|---|---|"]
        for j, key in enumerate(d["rsd"]):
            md.append(f"| {j + 1} | {d['rsd'][key]:.4g} | {d['rsd_abs_nm'][key]:.4g} |")
        md += ["", f"- friction: {d['friction_source']}",
               f"- condition number of H: {d['condition_number_H']:.6g}",
               f"- samples: {d['n_samples']}", ""]
        params = d["base_parameters"]
        io.write_csv(out / "base_parameters.csv", ("index", "estimate"),
                     ([p["index"] for p in params], [p["estimate"] for p in params]),
                     {"labels": [p["label"] for p in params]})
    elif "reduction" in docs:
        md += ["## Base parameters", ""]
        md += [f"{k + 1}. {lab}" for k, lab in enumerate(docs["reduction"]["labels"])]
        md.append("")

    path = out / "summary.md"
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(md))
    print(f"summary -> {path}")
    for name, fn, cmd in missing:
        print(f"missing stage {name}: {fn}", file=sys.stderr)
    return 0


# entry point ---------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file")
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--out", default=d,
                   help=f"output directory (default $HYDRARM_DATA_DIR or ./{DEFAULT_OUT})")
    p.add_argument("-v", "--verbose", action="store_true", default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydrarm",
                                     description="Hydraulic arm identification workflow")
    _global_flags(parser, False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-cylinder", help="simulate the six cylinder test rigs")
    _global_flags(p, True)
    p.add_argument("--noise", type=float, help="multiplier on default sensor noise (0 = clean)")
    p.add_argument("--rate", type=float, help="sampling rate in Hz (default 50)")
    p.add_argument("--periods", type=float, help="excitation periods (default 3)")
    p.add_argument("--joints", help="comma-separated joint list (default all)")
    p.add_argument("--second-tone", dest="second_tone", metavar="A,OMEGA",
                   help="add a second sine to make the piston mass identifiable")
    p.set_defaults(func=cmd_simulate_cylinder)

    p = sub.add_parser("identify-friction", help="fit linearised Stribeck parameters")
    _global_flags(p, True)
    p.add_argument("--input", help="record CSV or directory (default OUT/cylinders)")
    p.add_argument("--estimator", choices=("batch", "rls", "both"))
    p.add_argument("--free-mass", dest="free_mass", action="store_true", default=None,
                   help="estimate the piston mass instead of using the recorded value")
    p.set_defaults(func=cmd_identify_friction)

    p = sub.add_parser("design-trajectory", help="optimise a Fourier excitation trajectory")
    _global_flags(p, True)
    p.add_argument("--preset", choices=("table3",), help="evaluate a stored coefficient set")
    p.add_argument("--nH", type=int, help="harmonics per joint (default 3)")
    p.add_argument("--omega", type=float, help="base frequency in rad/s")
    p.add_argument("--budget", type=int, help=f"objective evaluations (>= {MIN_BUDGET})")
    p.add_argument("--boundary", choices=("offset", "zero"))
    p.add_argument("--rate", type=float, help="sampling rate of the profile CSV in Hz")
    p.set_defaults(func=cmd_design_trajectory)

    p = sub.add_parser("identify-dynamics", help="estimate the base inertial parameters")
    _global_flags(p, True)
    p.add_argument("--simulate", action="store_true", default=None,
                   help="generate torques from the planted ground truth")
    p.add_argument("--dataset", help="measured dataset CSV")
    p.add_argument("--trajectory", help="trajectory JSON (default OUT/trajectory.json)")
    p.add_argument("--friction", help="friction JSON (default OUT/friction.json)")
    p.add_argument("--skip-friction", dest="skip_friction", action="store_true", default=None)
    p.add_argument("--noise", type=float, help="torque noise sigma in N m (default 0.1)")
    p.add_argument("--rate", type=float, help="sampling rate in Hz (default 50)")
    p.set_defaults(func=cmd_identify_dynamics)

    p = sub.add_parser("report", help="write a markdown summary of all stages")
    _global_flags(p, True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config, config_dir = {}, None
        if args.config:
            cpath = Path(args.config)
            if not cpath.exists():
                raise CommandError(f"config file {cpath} does not exist")
            config = json.loads(cpath.read_text())
            if not isinstance(config, dict):
                raise CommandError("config file must hold a JSON object")
            config_dir = cpath.parent
        ctx = {"seed": _seed(args, config), "out": _out_dir(args, config),
               "model": _model(config, config_dir)}
        ctx["out"].mkdir(parents=True, exist_ok=True)
        with _timed(args.command):
            return args.func(args, config, ctx)
    except (CommandError, io.DataFormatError, FileNotFoundError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
