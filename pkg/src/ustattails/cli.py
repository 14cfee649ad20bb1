"""Command line front end.

Subcommands are stages of one pipeline; ``run`` executes them in order, and
each stage reads its inputs from the artifact files the previous stage wrote
into the output directory.  Running the stages separately therefore produces
byte-identical artifacts to one ``run``.  All floats are written with repr,
nothing records wall-clock time, and every random draw is keyed by the
configured seed, so identical configs give identical bytes.

Exit codes: 0 success, 1 error (bad config, missing artifact, bad math),
2 finished but not certified (entropy integral saturated by the finite index
floor, or bound ordering violated).
"""

import argparse
import math
import os
import sys

import numpy as np

from .bounds import report_text, compare_curves, uniform_tail_report
from .config import Config, ConfigError, resolve_grid
from .empirics import FieldSamples, TailCurve, empirical_moments
from .engine import (
    EXACT_TUPLE_BUDGET,
    Exact,
    Incomplete,
    alphabet_sampler,
    attach_alphabet,
    decompose_field,
    lognormal_sampler,
    make_kernel,
    normal_sampler,
    pareto_sampler,
    rademacher_sampler,
    simulate_panel,
    uniform_sampler,
)
from .entropy import FiniteMetricSpace
from .envelopes import MomentEnvelope, make_envelope

FIELD = "field.csv"
FIELD_META = "field_meta.txt"
DECOMP = "decomposition.csv"
PSI_USED = "psi_used.txt"
DISTANCE = "distance.csv"
ENTROPY = "entropy.csv"
ENTROPY_SUMMARY = "entropy_summary.txt"
MOMENTS_SUP = "moments_sup.csv"
TAIL_EMPIRICAL = "tail_empirical.csv"
TAIL_UPPER = "tail_upper.csv"
TAIL_LOWER = "tail_lower.csv"
BOUND_REPORT = "bound_report.txt"
VERIFY_REPORT = "verify_report.txt"
PLOT = "plot.svg"

OUT_ENV_VAR = "USTATTAILS_OUT"


def _f(x):
    return repr(float(x))


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _need(out_dir, name, stage):
    path = os.path.join(out_dir, name)
    if not os.path.exists(path):
        raise ConfigError(f"stage {stage!r} needs {name} in {out_dir}; run the earlier stage first")
    return path


# -- builders ------------------------------------------------------------


def build_sampler(cfg):
    name = cfg.get_str(
        "sampler.name",
        choices=("normal", "uniform", "rademacher", "pareto", "lognormal", "alphabet"),
    )
    if name == "normal":
        return normal_sampler()
    if name == "uniform":
        return uniform_sampler(cfg.get_float("sampler.lo", 0.0), cfg.get_float("sampler.hi", 1.0))
    if name == "rademacher":
        return rademacher_sampler()
    if name == "pareto":
        return pareto_sampler(cfg.get_float("sampler.a"))
    if name == "lognormal":
        return lognormal_sampler(cfg.get_float("sampler.sigma", 1.0))
    values = cfg.get_floats("sampler.values")
    weights = cfg.get_floats("sampler.weights", None)
    return alphabet_sampler(values, weights)


def build_kernel(cfg):
    name = cfg.get_str(
        "kernel.name", choices=("product", "sum", "half_sq_diff", "gprod", "table")
    )
    degree = cfg.get_int("kernel.degree", None)
    if name in ("product", "sum"):
        return make_kernel(name, degree, shift=cfg.get_float("kernel.shift", 0.0))
    if name == "half_sq_diff":
        return make_kernel(name, degree)
    if name == "gprod":
        t_grid = cfg.get_floats("kernel.t_grid")
        return make_kernel(name, degree, g=cfg.get_str("kernel.g", "sin"), t_grid=t_grid)
    values = cfg.get_floats("kernel.values")
    rows = cfg.get_floats("kernel.table")
    cols = len(rows) // len(values) if values else 0
    if not values or cols * len(values) != len(rows):
        cfg.fail("kernel.table", "table length must be a multiple of the value count")
    table = np.asarray(rows).reshape(len(values), cols)
    return make_kernel("table", degree, values=values, table=table)


def build_mode(cfg):
    mode = cfg.get_str("run.mode", "exact", choices=("exact", "incomplete"))
    if mode == "exact":
        return Exact(cfg.get_int("run.budget", EXACT_TUPLE_BUDGET))
    return Incomplete(cfg.get_int("run.subsets"), cfg.get_int("run.seed"))


def build_envelope(cfg):
    family = cfg.get_str(
        "psi.family",
        "natural",
        choices=("natural", "power_log", "exp_power", "constant"),
    )
    if family == "natural":
        return None
    if family == "power_log":
        return make_envelope("power_log", m=cfg.get_float("psi.m"), r=cfg.get_float("psi.r", 0.0))
    if family == "exp_power":
        return make_envelope("exp_power", coef=cfg.get_float("psi.coef"), expo=cfg.get_float("psi.expo"))
    return make_envelope("constant", value=cfg.get_float("psi.value"), p_sup=cfg.get_float("psi.p_sup"))


# -- artifact IO ---------------------------------------------------------


def write_field(out_dir, fld):
    lines = ["rep," + ",".join(str(lbl) for lbl in fld.labels)]
    for i in range(fld.replications):
        lines.append(str(i) + "," + ",".join(_f(v) for v in fld.values[i]))
    _write(os.path.join(out_dir, FIELD), "\n".join(lines) + "\n")
    meta = fld.meta
    mlines = [f"{k} = {meta[k]}" for k in sorted(meta) if k != "notes"]
    for note in meta.get("notes", []):
        mlines.append(f"note = {note}")
    _write(os.path.join(out_dir, FIELD_META), "\n".join(mlines) + "\n")


def read_field(out_dir, stage):
    path = _need(out_dir, FIELD, stage)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        labels = tuple(header[1:])
        rows = [[float(x) for x in line.strip().split(",")[1:]] for line in fh if line.strip()]
    meta = {}
    meta_path = os.path.join(out_dir, FIELD_META)
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            for line in fh:
                if "=" not in line:
                    continue
                k, v = line.split("=", 1)
                k, v = k.strip(), v.strip()
                if k == "note":
                    meta.setdefault("notes", []).append(v)
                else:
                    meta[k] = v
    return FieldSamples(labels, np.array(rows), meta)


def write_distance(out_dir, labels, dist):
    lines = ["label," + ",".join(str(l) for l in labels)]
    for i, lbl in enumerate(labels):
        lines.append(str(lbl) + "," + ",".join(_f(v) for v in dist[i]))
    _write(os.path.join(out_dir, DISTANCE), "\n".join(lines) + "\n")


def read_distance(out_dir, stage):
    path = _need(out_dir, DISTANCE, stage)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        labels = tuple(header[1:])
        rows = [[float(x) for x in line.strip().split(",")[1:]] for line in fh if line.strip()]
    return FiniteMetricSpace(labels, np.array(rows))


def write_curve(path, curve):
    lines = [f"# samples = {curve.sample_count}", "u,prob"]
    for u, p in zip(curve.u_grid, curve.probs):
        lines.append(f"{_f(u)},{_f(p)}")
    _write(path, "\n".join(lines) + "\n")


def read_curve(path, kind):
    samples = 0
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if "samples" in line and "=" in line:
                    samples = int(line.split("=", 1)[1])
                continue
            if not line or line.startswith("u,"):
                continue
            u, p = line.split(",")
            rows.append((float(u), float(p)))
    grid = np.array([r[0] for r in rows])
    probs = np.array([r[1] for r in rows])
    return TailCurve(grid, probs, kind, sample_count=samples)


def write_psi(out_dir, env, degree):
    text = f"psi = {env.to_text()}\ndegree = {degree}\n"
    _write(os.path.join(out_dir, PSI_USED), text)


def read_psi(out_dir, stage):
    path = _need(out_dir, PSI_USED, stage)
    env, degree = None, None
    with open(path) as fh:
        for line in fh:
            if line.startswith("psi ="):
                env = MomentEnvelope.from_text(line.split("=", 1)[1].strip())
            elif line.startswith("degree ="):
                degree = int(line.split("=", 1)[1])
    if env is None or degree is None:
        raise ConfigError(f"{path}: malformed envelope record")
    return env, degree


def write_svg(out_dir, curves):
    """Minimal log-scale tail plot; polyline per curve, no external assets."""
    width, height, pad = 640, 400, 50
    floor = 1e-6
    all_u = curves["empirical"].u_grid
    u_lo, u_hi = float(all_u.min()), float(all_u.max())
    if u_hi <= u_lo:
        u_hi = u_lo + 1.0

    def x(u):
        return pad + (u - u_lo) / (u_hi - u_lo) * (width - 2 * pad)

    def y(p):
        lp = math.log10(max(p, floor))
        return pad + (0.0 - lp) / (0.0 - math.log10(floor)) * (height - 2 * pad)

    colors = {"empirical": "#1f77b4", "upper": "#d62728", "lower": "#2ca02c"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#888"/>',
    ]
    for name, curve in curves.items():
        pts = " ".join(f"{x(u):.2f},{y(p):.2f}" for u, p in zip(curve.u_grid, curve.probs))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{colors.get(name, "#333")}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - pad + 4}" y="{y(curve.probs[-1]):.2f}" font-size="10" '
            f'fill="{colors.get(name, "#333")}">{name}</text>'
        )
    parts.append(
        f'<text x="{pad}" y="{height - 10}" font-size="10" fill="#333">level u '
        f'({_f(u_lo)} to {_f(u_hi)}), log tail probability down to 1e-6</text>'
    )
    parts.append("</svg>")
    _write(os.path.join(out_dir, PLOT), "\n".join(parts) + "\n")


# -- stages ---------------------------------------------------------------


def stage_simulate(cfg, out_dir):
    kernel = build_kernel(cfg)
    sampler = build_sampler(cfg)
    seed = cfg.get_int("run.seed")
    n = cfg.get_int("run.n")
    reps = cfg.get_int("run.reps")
    rank_raw = cfg.get_str("run.rank", "auto")
    rank = None if rank_raw == "auto" else int(rank_raw)
    fld = simulate_panel(
        kernel,
        sampler,
        n,
        reps,
        seed,
        rank=rank,
        mode=build_mode(cfg),
        convention=cfg.get_str("bound.convention", "multiply", choices=("multiply", "divide")),
    )
    write_field(out_dir, fld)
    if sampler.alphabet is not None:
        decomps = decompose_field(attach_alphabet(kernel, sampler))
        write_decomposition(out_dir, decomps)
    return 0


def write_decomposition(out_dir, decomps):
    d = len(decomps.per_t[0].zetas)
    header = "t,mean,rank,degenerate," + ",".join(f"zeta_{c}" for c in range(1, d + 1))
    lines = [header]
    for dec in decomps.per_t:
        row = [str(dec.t), _f(dec.mean), str(dec.rank), str(dec.degenerate).lower()]
        row += [_f(z) for z in dec.zetas]
        lines.append(",".join(row))
    _write(os.path.join(out_dir, DECOMP), "\n".join(lines) + "\n")


def stage_decompose(cfg, out_dir):
    kernel = build_kernel(cfg)
    sampler = build_sampler(cfg)
    if sampler.alphabet is None:
        cfg.fail("sampler.name", "decomposition needs a finite alphabet sampler")
    decomps = decompose_field(attach_alphabet(kernel, sampler))
    write_decomposition(out_dir, decomps)
    return 0


def _resolve_degree(cfg, fld):
    if cfg.has("bound.degree"):
        return cfg.get_int("bound.degree")
    if fld is not None and "degree" in fld.meta:
        return int(fld.meta["degree"])
    if cfg.has("kernel.degree"):
        return cfg.get_int("kernel.degree")
    raise ConfigError(f"{cfg.path}: cannot determine the kernel degree; set bound.degree")


def stage_entropy(cfg, out_dir):
    from .empirics import envelope_distance, natural_envelope
    from .entropy import default_eps_grid, entropy_integral

    env = build_envelope(cfg)
    if env is not None and os.path.exists(os.path.join(out_dir, DISTANCE)):
        space = read_distance(out_dir, "entropy")
        fld = read_field(out_dir, "entropy") if os.path.exists(os.path.join(out_dir, FIELD)) else None
    else:
        fld = read_field(out_dir, "entropy")
        p_grid = resolve_grid(cfg.get_str("grids.p", "log:2:16:8"))
        if env is None:
            env = natural_envelope(fld, p_grid)
        dist = envelope_distance(fld, env, p_grid=p_grid)
        space = FiniteMetricSpace(fld.labels, dist)
        write_distance(out_dir, fld.labels, dist)
    degree = _resolve_degree(cfg, fld)
    write_psi(out_dir, env, degree)
    from .envelopes import rosenthal_lift

    tau = rosenthal_lift(env, degree)
    eps_grid = None
    if cfg.has("grids.eps"):
        eps_grid = resolve_grid(cfg.get_str("grids.eps"))
    else:
        eps_grid = default_eps_grid(space)
    estimator = cfg.get_str("entropy.estimator", "greedy", choices=("greedy", "packing", "exact"))
    ent = entropy_integral(
        space,
        tau,
        eps_grid,
        estimator=estimator,
        plateau_fraction=cfg.get_float("entropy.plateau_fraction", 0.9),
        p_max=cfg.get_float("psi.p_max", 64.0),
        points=cfg.get_int("psi.points", 257),
    )
    lines = ["eps,count,entropy,integrand"]
    for e, h, g in zip(ent.eps_grid, ent.entropies, ent.integrand):
        lines.append(f"{_f(e)},{int(round(math.exp(h)))},{_f(h)},{_f(g)}")
    _write(os.path.join(out_dir, ENTROPY), "\n".join(lines) + "\n")
    summary = [
        f"estimator = {estimator}",
        f"points = {space.size}",
        f"diameter = {_f(space.diameter)}",
        f"integral = {_f(ent.value)}",
        f"saturated_fraction = {_f(ent.saturated_fraction)}",
        f"certified = {'true' if ent.finite else 'false'}",
    ]
    _write(os.path.join(out_dir, ENTROPY_SUMMARY), "\n".join(summary) + "\n")
    return 0


def stage_bounds(cfg, out_dir):
    fld = read_field(out_dir, "bounds")
    env, degree = read_psi(out_dir, "bounds")
    p_grid = resolve_grid(cfg.get_str("grids.p", "log:2:16:8"))
    sup_stat = fld.sup_abs()
    u_grid = resolve_grid(cfg.get_str("grids.u", "quantile:0.5:0.99:16"), data=sup_stat)
    eps_grid = resolve_grid(cfg.get_str("grids.eps")) if cfg.has("grids.eps") else None
    lower = None
    if cfg.has("bound.lower_beta"):
        lower = {
            "beta": cfg.get_float("bound.lower_beta"),
            "exponent": cfg.get_str(
                "bound.lower_exponent",
                "one_plus_beta",
                choices=("one_plus_beta", "one_plus_inv_beta"),
            ),
            "column": cfg.get_int("bound.lower_column", 0),
        }
    report = uniform_tail_report(
        fld,
        p_grid,
        degree,
        u_grid,
        env=env,
        eps_grid=eps_grid,
        estimator=cfg.get_str("entropy.estimator", "greedy", choices=("greedy", "packing", "exact")),
        plateau_fraction=cfg.get_float("entropy.plateau_fraction", 0.9),
        p_max=cfg.get_float("psi.p_max", 64.0),
        points=cfg.get_int("psi.points", 257),
        lower=lower,
    )
    sup_table = empirical_moments(sup_stat, p_grid, label="sup")
    lines = ["p,value,low_confidence"]
    for p, v, low in zip(sup_table.p_grid, sup_table.values, sup_table.low_confidence):
        lines.append(f"{_f(p)},{_f(v)},{str(bool(low)).lower()}")
    _write(os.path.join(out_dir, MOMENTS_SUP), "\n".join(lines) + "\n")
    write_curve(os.path.join(out_dir, TAIL_EMPIRICAL), report.curves["empirical"])
    write_curve(os.path.join(out_dir, TAIL_UPPER), report.curves["upper"])
    if "lower" in report.curves:
        write_curve(os.path.join(out_dir, TAIL_LOWER), report.curves["lower"])
    _write(os.path.join(out_dir, BOUND_REPORT), report_text(report))
    if cfg.get_bool("output.plot", False):
        write_svg(out_dir, report.curves)
    return 0 if report.certified else 2


def stage_verify(cfg, out_dir):
    emp = read_curve(_need(out_dir, TAIL_EMPIRICAL, "verify"), "empirical")
    upper = read_curve(_need(out_dir, TAIL_UPPER, "verify"), "upper_bound")
    lower_path = os.path.join(out_dir, TAIL_LOWER)
    lower = read_curve(lower_path, "lower_bound") if os.path.exists(lower_path) else None
    sigma = cfg.get_float("bound.sigma", 3.0)
    cmp = compare_curves(emp, upper=upper, lower=lower, sigma=sigma)
    lines = [
        f"sigma = {_f(cmp.sigma)}",
        f"levels = {cmp.u_grid.size}",
        f"upper_violations = {cmp.upper_violations}",
        f"lower_violations = {cmp.lower_violations}",
        f"max_upper_excess = {_f(cmp.max_upper_excess)}",
        f"max_lower_excess = {_f(cmp.max_lower_excess)}",
        f"ordering = {'PASS' if cmp.ok else 'FAIL'}",
    ]
    _write(os.path.join(out_dir, VERIFY_REPORT), "\n".join(lines) + "\n")
    return 0 if cmp.ok else 2


def stage_run(cfg, out_dir):
    stage_simulate(cfg, out_dir)
    stage_entropy(cfg, out_dir)
    rc_bounds = stage_bounds(cfg, out_dir)
    rc_verify = stage_verify(cfg, out_dir)
    return max(rc_bounds, rc_verify)


STAGES = {
    "run": stage_run,
    "simulate": stage_simulate,
    "entropy": stage_entropy,
    "bounds": stage_bounds,
    "verify": stage_verify,
    "decompose": stage_decompose,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ustattails",
        description="Simulate U-statistic deviation fields and certify uniform tail bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in STAGES.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("config", help="path to a key-value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config entry",
        )
        p.add_argument("--out", default=None, help="output directory for artifacts")
    args = parser.parse_args(argv)
    try:
        cfg = Config.from_file(args.config)
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set needs SECTION.KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            cfg.override(key.strip(), value.strip())
        out_dir = args.out or (
            cfg.get_str("output.dir", None) or os.environ.get(OUT_ENV_VAR) or "."
        )
        os.makedirs(out_dir, exist_ok=True)
        return STAGES[args.command](cfg, out_dir)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
