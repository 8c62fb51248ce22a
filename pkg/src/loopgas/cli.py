"""Command line front end: runs, numeric checks, and SVG drawings.

Run settings live in a plain ``section.key = value`` file; every key can
also be set by a flag named after its last component, flags winning.
Sample streams are newline-delimited JSON with a header line, tables are
CSV, and every output is byte-for-byte reproducible from (config, seed).

Exit codes: 0 success, 1 bad invocation or config, 2 runtime failure
(including a numeric check that ran but came out inconsistent).
"""

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace

from . import mirror as mirror_model
from .clusters import PRIMAL, build_clusters, preimages, repair
from .geometry import edge_parity, make_domain
from .linkconfig import BAR, SimParams, deserialize, serialize
from .observables import (
    dimer_order_parameter,
    estimate,
    loop_estimator,
    perimeter_tail,
)
from .quantum import (
    build_model,
    chain_params,
    elementary_observable,
    gibbs_expectation,
    partition_function,
    q_observable,
)
from .regions import ival_pieces
from .sampler import Schedule, run_chain
from .smallexact import chain_trace_series


class CliError(Exception):
    """Invocation or configuration problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    """One run's knobs: model, lattice, and chain schedule."""

    n: float = 2.0
    u: float = 0.5
    kappa: float = 0.0
    h: float = 1.0
    kind: str = "torus"
    L: int = 1
    beta: float = 1.0
    sweeps: int = 2000
    burnin: int = 200
    thin: int = 1
    seed: int = 0
    chains: int = 1


_CONFIG_KEYS = {
    "model.n": ("n", float),
    "model.u": ("u", float),
    "model.kappa": ("kappa", float),
    "model.h": ("h", float),
    "lattice.kind": ("kind", str),
    "lattice.L": ("L", int),
    "lattice.beta": ("beta", float),
    "mcmc.sweeps": ("sweeps", int),
    "mcmc.burnin": ("burnin", int),
    "mcmc.thin": ("thin", int),
    "mcmc.seed": ("seed", int),
    "mcmc.chains": ("chains", int),
}


def parse_config_text(text):
    """``section.key = value`` lines to RunConfig field values."""
    out = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key or not val:
            raise CliError(f"config line {no}: expected 'section.key = value'")
        if key not in _CONFIG_KEYS:
            raise CliError(f"config line {no}: unknown key {key!r}")
        attr, conv = _CONFIG_KEYS[key]
        try:
            out[attr] = conv(val)
        except ValueError:
            raise CliError(
                f"config line {no}: {key} needs a {conv.__name__}, got {val!r}"
            ) from None
    return out


def load_run_config(args) -> RunConfig:
    values = {}
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_config_text(fh.read())
        except OSError as e:
            raise CliError(f"cannot read config {path}: {e.strerror}") from None
    rc = RunConfig(**values)
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return replace(rc, **overrides)


def _setup(rc):
    """Domain, params, and schedule with all guards checked up front."""
    try:
        domain = make_domain(rc.kind, rc.L, rc.beta)
        params = SimParams(rc.n, rc.u, rc.kappa, rc.h)
        schedule = Schedule(
            burnin=rc.burnin, sweeps=rc.sweeps, thin=rc.thin, seed=rc.seed
        )
    except ValueError as e:
        raise CliError(str(e)) from None
    if rc.chains < 1:
        raise CliError(f"chains must be >= 1, got {rc.chains}")
    return domain, params, schedule


def _run_chains(params, domain, schedule, chains):
    samples, ells = [], []
    for c in range(chains):
        res = run_chain(params, domain, replace(schedule, chain_index=c))
        samples.extend(res.samples)
        ells.extend(res.ells)
    return samples, ells


# ---------------------------------------------------------------------------
# stream files

def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _stream_header(rc):
    return {
        "format": "loopgas-samples",
        "version": 1,
        "kind": rc.kind,
        "L": rc.L,
        "beta": rc.beta,
        "n": rc.n,
        "u": rc.u,
        "kappa": rc.kappa,
        "h": rc.h,
        "sweeps": rc.sweeps,
        "burnin": rc.burnin,
        "thin": rc.thin,
        "seed": rc.seed,
        "chains": rc.chains,
    }


def _read_stream(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None
    if not lines:
        raise CliError(f"{path}: empty stream")
    try:
        records = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: not newline-delimited JSON ({e.msg})") from None
    header, rows = records[0], records[1:]
    if not isinstance(header, dict) or header.get("format") != "loopgas-samples":
        raise CliError(f"{path}: missing loopgas-samples header line")
    try:
        cfgs = [deserialize(r["config"]) for r in rows]
    except (KeyError, TypeError):
        raise CliError(f"{path}: sample rows need a 'config' field") from None
    except ValueError as e:
        raise CliError(f"{path}: bad sample ({e})") from None
    return header, rows, cfgs


# ---------------------------------------------------------------------------
# subcommands

def _cmd_sample(args):
    rc = load_run_config(args)
    domain, params, schedule = _setup(rc)
    lines = [json.dumps(_stream_header(rc), sort_keys=True)]
    for c in range(rc.chains):
        res = run_chain(params, domain, replace(schedule, chain_index=c))
        for i, (cfg, e) in enumerate(zip(res.samples, res.ells)):
            row = {"chain": c, "index": i, "ell": e, "config": serialize(cfg)}
            lines.append(json.dumps(row, sort_keys=True))
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _measure_one(name, samples, domain, params):
    if name == "dimer":
        return dimer_order_parameter(samples, domain, params)
    n = params.n
    if n != int(n) or n < 1:
        raise CliError(f"observable {name!r} needs integer n, got {n}")
    n = int(n)
    edges = list(domain.edges)
    e = edges[len(edges) // 2]
    if name == "q":
        obs = q_observable(n, e)
    elif name in ("e11", "e12"):
        if name == "e12" and n < 2:
            raise CliError("observable 'e12' needs n >= 2")
        colors = (0, 0) if name == "e11" else (0, 1)
        obs = elementary_observable(n, (e, e + 1), colors, colors)
    else:
        raise CliError(f"unknown observable {name!r} (q, e11, e12, dimer)")
    return loop_estimator(samples, domain, n, obs)


def _cmd_measure(args):
    if args.input:
        if args.config:
            raise CliError("give either --in or --config, not both")
        header, _, samples = _read_stream(args.input)
        if not samples:
            raise CliError(f"{args.input}: stream holds no samples")
        domain = samples[0].domain
        try:
            params = SimParams(header["n"], header["u"], header["kappa"], header["h"])
        except (KeyError, ValueError) as e:
            raise CliError(f"{args.input}: unusable model parameters ({e})") from None
    else:
        rc = load_run_config(args)
        domain, params, schedule = _setup(rc)
        samples, _ = _run_chains(params, domain, schedule, rc.chains)
    names = [w.strip() for w in args.observables.split(",") if w.strip()]
    if not names:
        raise CliError("no observables requested")
    lines = ["observable,mean,std_error,tau,n_samples"]
    for name in names:
        est = _measure_one(name, samples, domain, params)
        lines.append(
            f"{name},{float(est.mean)!r},{float(est.std_error)!r},"
            f"{float(est.autocorrelation_time)!r},{est.n_samples}"
        )
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_ed_check(args):
    try:
        domain = make_domain("torus", args.L, args.beta)
        params = SimParams(args.n, args.u)
        schedule = Schedule(
            burnin=args.burnin, sweeps=args.sweeps, thin=args.thin, seed=args.seed
        )
    except ValueError as e:
        raise CliError(str(e)) from None
    samples, _ = _run_chains(params, domain, schedule, 1)
    uc, bc = chain_params(args.n, args.u, args.beta)
    model = build_model(args.n, args.L, uc)
    edges = list(domain.edges)
    e = edges[len(edges) // 2]
    panel = [
        ("q", q_observable(args.n, e)),
        ("e(1,1)", elementary_observable(args.n, (e, e + 1), (0, 0), (0, 0))),
    ]
    if args.n >= 2:
        panel.append(
            ("e(1,2)", elementary_observable(args.n, (e, e + 1), (0, 1), (0, 1)))
        )
    print(f"{'observable':<10} {'loop':>12} {'exact':>12} {'std_err':>10} {'sigma':>7}")
    worst = 0.0
    for label, obs in panel:
        est = loop_estimator(samples, domain, args.n, obs)
        exact = gibbs_expectation(model, obs, bc)
        sigma = abs(est.mean - exact) / max(est.std_error, 1e-12)
        worst = max(worst, sigma)
        print(
            f"{label:<10} {est.mean:>12.6f} {exact:>12.6f}"
            f" {est.std_error:>10.6f} {sigma:>7.2f}"
        )
    ok = worst <= args.sigma_tol
    verdict = "agreement" if ok else "mismatch"
    print(f"{verdict}: worst sigma {worst:.2f} against tolerance {args.sigma_tol}")
    return 0 if ok else 2


def _cmd_series_check(args):
    if args.terms < 1:
        raise CliError(f"--terms must be >= 1, got {args.terms}")
    try:
        series = chain_trace_series(
            args.L, args.beta, args.u, args.n, args.terms, args.budget
        )
    except ValueError as e:
        raise CliError(str(e)) from None
    exact = partition_function(build_model(args.n, args.L, args.u), args.beta)
    gap = abs(series.value - exact)
    bound = series.tail_bound + 1e-8
    print(f"series {series.value:.10f}  ({len(series.terms)} terms, K={series.K})")
    print(f"trace  {exact:.10f}")
    print(f"gap {gap:.3e} against tail bound {series.tail_bound:.3e} + 1e-8")
    ok = gap <= bound
    print("consistent" if ok else "inconsistent")
    return 0 if ok else 2


def _cmd_repair_audit(args):
    rc = load_run_config(args)
    if rc.kind != "primal":
        raise CliError("repair-audit needs lattice.kind = primal")
    domain, params, schedule = _setup(rc)
    samples, _ = _run_chains(params, domain, schedule, rc.chains)
    outs = [repair(cfg, domain, params) for cfg in samples]
    bad = 0
    for i, ro in enumerate(outs):
        ok1 = ro.vol1_outside >= 0.5 * ro.vol_outside - 1e-9
        ok2 = ro.vol_outside >= ro.vol_outside_before - 1e-9
        ok3 = 4 * ro.delta_ell >= len(ro.report.exposed)
        if not (ok1 and ok2 and ok3):
            bad += 1
            print(f"sample {i}: observation failure (1={ok1} 2={ok2} 3={ok3})")
    checked, pre_bad = 0, 0
    if args.preimages:
        for cfg, ro in zip(samples, outs):
            if checked >= args.preimages:
                break
            if len(ro.out_links) > args.out_limit:
                continue
            pre = preimages(ro, domain, params)
            if cfg not in pre or not 1 <= len(pre) <= 4 ** len(ro.out_links):
                pre_bad += 1
            checked += 1
    if args.out:
        lines = ["index,ell,ell_bar,delta_ell,vol_outside,out_links,exposed"]
        for i, ro in enumerate(outs):
            lines.append(
                f"{i},{ro.ell},{ro.ell_bar},{ro.delta_ell},"
                f"{float(ro.vol_outside)!r},{len(ro.out_links)},{len(ro.exposed)}"
            )
        _write_text(args.out, "\n".join(lines) + "\n")
    print(
        f"{len(samples)} samples audited; observation failures: {bad};"
        f" preimage checks: {checked} ({pre_bad} failures)"
    )
    return 0 if bad == 0 and pre_bad == 0 else 2


def _cmd_perimeter_tail(args):
    rc = load_run_config(args)
    domain, params, schedule = _setup(rc)
    if args.x0:
        try:
            x, t = (float(w) for w in args.x0.split(","))
        except ValueError:
            raise CliError("--x0 expects 'x,t' with two numbers") from None
    else:
        x, t = 0.5, (domain.t_lo + domain.t_hi) / 2.0
    sites = list(domain.sites)
    if not (sites[0] <= x <= sites[-1] and domain.t_lo <= t <= domain.t_hi):
        raise CliError(f"seed point ({x}, {t}) lies outside the domain")
    samples, _ = _run_chains(params, domain, schedule, rc.chains)
    tail = perimeter_tail(samples, domain, params, (x, t))
    lines = ["v,survival"]
    for v, s in zip(tail.vs, tail.survival):
        lines.append(f"{float(v)!r},{float(s)!r}")
    _write_text(args.out, "\n".join(lines) + "\n")
    print(
        f"slope {tail.slope!r} intercept {tail.intercept!r}"
        f" r2 {tail.r_squared!r} samples {tail.n_samples}",
        file=sys.stderr,
    )
    return 0


def _mirror_params(args):
    if args.u is not None or args.epsilon is not None:
        if args.u is None or args.epsilon is None:
            raise CliError("--u and --epsilon go together")
        if any(v is not None for v in (args.pv, args.ph, args.pe)):
            raise CliError("give either --u/--epsilon or --pv/--ph/--pe")
        try:
            return mirror_model.rescaled_params(args.u, args.epsilon, args.n)
        except ValueError as e:
            raise CliError(str(e)) from None
    trio = (args.pv, args.ph, args.pe)
    if any(v is None for v in trio):
        raise CliError("state weights need --pv --ph --pe (or --u with --epsilon)")
    try:
        return mirror_model.MirrorParams(*trio, args.n)
    except ValueError as e:
        raise CliError(str(e)) from None


def _mirror_box(args):
    if args.bridge:
        if args.width or args.height or args.ring:
            raise CliError("--bridge replaces --width/--height/--ring")
        L, beta, eps = args.bridge
        if L != int(L) or L < 1:
            raise CliError(f"bridge L must be a positive integer, got {L}")
        try:
            return mirror_model.bridge_config(int(L), beta, eps)
        except ValueError as e:
            raise CliError(str(e)) from None
    if not args.width or not args.height:
        raise CliError("give --width and --height, or --bridge L BETA EPS")
    try:
        if args.ring:
            if args.tau_periodic:
                raise CliError("a frozen ring needs a free time boundary")
            return mirror_model.ring_config(args.width, args.height, args.ring)
        return mirror_model.free_config(
            args.width, args.height, tau_periodic=args.tau_periodic
        )
    except ValueError as e:
        raise CliError(str(e)) from None


def _cmd_mirror(args):
    params = _mirror_params(args)
    box = _mirror_box(args)
    try:
        schedule = Schedule(
            burnin=args.burnin, sweeps=args.sweeps, thin=args.thin, seed=args.seed
        )
    except ValueError as e:
        raise CliError(str(e)) from None
    run = mirror_model.run_mirror_chain(params, box, schedule)
    header = {
        "format": "loopgas-mirror",
        "version": 1,
        "width": box.width,
        "height": box.height,
        "tau_periodic": box.tau_periodic,
        "p_v": params.p_v,
        "p_h": params.p_h,
        "p_empty": params.p_empty,
        "n": params.n,
        "burnin": schedule.burnin,
        "sweeps": schedule.sweeps,
        "thin": schedule.thin,
        "seed": schedule.seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    trivials = []
    for i, (cfg, e) in enumerate(zip(run.samples, run.ells)):
        tv = mirror_model.mirror_trivial_loops(cfg)
        trivials.append(float(tv))
        row = {"index": i, "ell": e, "trivial": tv, "grid": cfg.to_text()}
        lines.append(json.dumps(row, sort_keys=True))
    _write_text(args.out, "\n".join(lines) + "\n")
    order = mirror_model.black_white_order(run.samples)
    triv = estimate(trivials)
    mean_ell = sum(run.ells) / len(run.ells)
    print(
        f"samples {len(run.samples)} mean_loops {mean_ell:.4f}"
        f" order {order.mean:.4f} +- {order.std_error:.4f}"
        f" trivial {triv.mean:.4f} +- {triv.std_error:.4f}",
        file=sys.stderr,
    )
    return 0


def render_svg(cfg, domain, report=None) -> str:
    """Deterministic SVG of one configuration, clusters shaded if given.

    Primal columns are grey, dual columns white; a double bar is a pair of
    horizontal rules across its column, a cross a pair of crossing
    diagonals.  Cluster cells are tinted green (primal) or orange (dual).
    """
    sx, sy, m = 64.0, 48.0, 24.0
    sites = list(domain.sites)
    xmin = sites[0] - 0.5
    span_t = domain.t_hi - domain.t_lo

    def px(x):
        return m + (x - xmin) * sx

    def py(t):
        return m + (domain.t_hi - t) * sy

    def rect(x, y, w, h, fill):
        return (
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}"'
            f' height="{h:.2f}" fill="{fill}"/>'
        )

    def seg(x1, y1, x2, y2, width):
        return (
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}"'
            f' stroke="black" stroke-width="{width}"/>'
        )

    width = 2 * m + (sites[-1] + 0.5 - xmin) * sx
    height = 2 * m + span_t * sy
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}"'
        f' height="{height:.0f}">',
        rect(0.0, 0.0, width, height, "white"),
    ]
    for e in domain.edges:
        fill = "#d0d0d0" if edge_parity(e) == "primal" else "#ffffff"
        parts.append(rect(px(e), py(domain.t_hi), sx, span_t * sy, fill))
    if report is not None:
        for c in report.clusters:
            fill = "#8fd08f" if c.parity == PRIMAL else "#f2b05e"
            for cell in sorted(c.region.cells):
                for iv in c.region.cells[cell]:
                    for lo, hi in ival_pieces(domain, iv):
                        parts.append(
                            rect(px(cell - 0.5), py(hi), sx, (hi - lo) * sy, fill)
                        )
    for s in sites:
        parts.append(seg(px(s), py(domain.t_lo), px(s), py(domain.t_hi), 1.0))
    for lk in cfg.links():
        xl, xr, y = px(lk.x_left), px(lk.x_left + 1), py(lk.t)
        if lk.kind == BAR:
            parts.append(seg(xl, y - 2.4, xr, y - 2.4, 1.8))
            parts.append(seg(xl, y + 2.4, xr, y + 2.4, 1.8))
        else:
            parts.append(seg(xl, y - 5.0, xr, y + 5.0, 1.8))
            parts.append(seg(xl, y + 5.0, xr, y - 5.0, 1.8))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _cmd_render(args):
    header, _, cfgs = _read_stream(args.input)
    if not 0 <= args.index < len(cfgs):
        raise CliError(f"index {args.index} outside stream of {len(cfgs)} samples")
    cfg = cfgs[args.index]
    report = None
    if args.clusters:
        try:
            params = SimParams(header["n"], header["u"], header["kappa"], header["h"])
        except (KeyError, ValueError) as e:
            raise CliError(f"{args.input}: unusable model parameters ({e})") from None
        report = build_clusters(cfg, cfg.domain, params)
    _write_text(args.out, render_svg(cfg, cfg.domain, report))
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_run_flags(p):
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--n", type=float, help="weight per loop")
    p.add_argument("--u", type=float, help="cross fraction in [0, 1]")
    p.add_argument("--kappa", type=float, help="small-loop cutoff parameter")
    p.add_argument("--h", type=float, help="block height parameter")
    p.add_argument("--kind", choices=("torus", "primal", "dual"))
    p.add_argument("--L", type=int, help="half the number of chain sites")
    p.add_argument("--beta", type=float, help="time extent")
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)


def _build_parser():
    parser = _Parser(prog="loopgas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("sample", help="run the chain and write a sample stream")
    _add_run_flags(p)
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("measure", help="estimate observables, as a CSV table")
    _add_run_flags(p)
    p.add_argument("--in", dest="input", help="existing sample stream to measure")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument(
        "--observables",
        default="q,e11,dimer",
        help="comma list from: q, e11, e12, dimer",
    )
    p.set_defaults(func=_cmd_measure)

    p = sub.add_parser("ed-check", help="loop estimators against a small exact model")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--u", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--sweeps", type=int, default=4000)
    p.add_argument("--burnin", type=int, default=400)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-tol", type=float, default=4.0)
    p.set_defaults(func=_cmd_ed_check)

    p = sub.add_parser("series-check", help="trace series against the exact trace")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--u", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--terms", type=int, default=9, help="series truncation order")
    p.add_argument("--budget", type=int, default=2_000_000)
    p.set_defaults(func=_cmd_series_check)

    p = sub.add_parser("repair-audit", help="repair-map bounds on sampled configs")
    _add_run_flags(p)
    p.add_argument("--preimages", type=int, default=0, help="preimage checks to run")
    p.add_argument(
        "--out-limit", type=int, default=8, help="skip configs with more out links"
    )
    p.add_argument("--out", help="per-sample CSV path")
    p.set_defaults(func=_cmd_repair_audit)

    p = sub.add_parser("perimeter-tail", help="boundary-component perimeter survival")
    _add_run_flags(p)
    p.add_argument("--x0", help="seed point as 'x,t' (default central)")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.set_defaults(func=_cmd_perimeter_tail)

    p = sub.add_parser("mirror", help="heat-bath run of the discrete mirror model")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--tau-periodic", action="store_true")
    p.add_argument("--ring", choices=("black", "white"), help="frozen boundary ring")
    p.add_argument(
        "--bridge",
        nargs=3,
        type=float,
        metavar=("L", "BETA", "EPS"),
        help="box matching a continuum chain at lattice step EPS",
    )
    p.add_argument("--pv", type=float, help="vertical-mirror weight")
    p.add_argument("--ph", type=float, help="horizontal-mirror weight")
    p.add_argument("--pe", type=float, help="empty-site weight")
    p.add_argument("--u", type=float, help="cross fraction for rescaled weights")
    p.add_argument("--epsilon", type=float, help="lattice step for rescaled weights")
    p.add_argument("--n", type=float, required=True, help="weight per loop")
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--burnin", type=int, default=200)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.set_defaults(func=_cmd_mirror)

    p = sub.add_parser("render", help="draw one sample of a stream as SVG")
    p.add_argument("--in", dest="input", required=True, help="sample stream path")
    p.add_argument("--index", type=int, default=0, help="sample row to draw")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument(
        "--clusters", action="store_true", help="shade clusters of small loops"
    )
    p.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - boundary of the process
        print(f"failed: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
