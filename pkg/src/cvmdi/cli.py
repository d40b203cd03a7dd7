"""Command-line front end.

Subcommands: keyrate (single evaluation), sweep (curve data), optimize
(modulation-variance search), frontier (secure-distance boundary) and
mc-coverage (confidence-interval validation). Scenarios come from a
sectioned key=value config file; results leave as CSV with a fixed header
and 12 significant digits so regression diffs stay byte-stable.

Exit codes: 0 = positive key rate, 2 = nonpositive key rate, 1 = usage or
config error. Sweep-point fan-out parallelises over CVMDI_THREADS worker
processes (default: logical cores); everything else is single-threaded.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import functools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimation_mc import channel_estimate, coverage_experiment, generate_samples, mle_estimate
from .finite_size import (
    EstimationFailureError,
    FiniteSizeParams,
    KeyRateReport,
    finite_key_rate,
)
from .optimizer import (
    SweepSpec,
    distance_frontier,
    optimal_modulation,
    sweep_point,
)
from .protocol_model import DetectorModel, ProtocolParams, pre_bs_channel_params

CSV_HEADER = ["variable", "value", "i_ab", "chi_be_worst", "delta_n", "k", "status", "worst_corner"]

# Drawing more per-channel samples than this is a config mistake, not a run.
MC_SAMPLE_CAP = 20_000_000

_SWEEP_VARIABLES = ("distance_ac", "distance_bc", "variance", "block_length")


class ConfigError(Exception):
    """Scenario file or option combination the CLI refuses to run."""


# Section -> (required keys, optional keys). Anything else is rejected by
# name so typos never silently fall back to defaults.
_SCHEMA = {
    "channel": ({"l_ac_km", "l_bc_km", "eps1_snu", "eps2_snu"}, {"alpha_db_per_km"}),
    "modulation": ({"v_a_snu", "v_b_snu"}, set()),
    "reconciliation": ({"beta"}, set()),
    "finite": ({"n_total"}, {"est_fraction", "eps_pe", "eps_smooth", "eps_pa", "v_mode", "i_ab_worst"}),
    "detector": ({"eta", "v_el_snu"}, set()),
    "mode": (set(), {"mode", "seed"}),
}
_REQUIRED_SECTIONS = ("channel", "modulation", "reconciliation", "finite")


@dataclass(frozen=True)
class Scenario:
    """Parsed config: the physical scenario plus evaluation settings."""

    protocol: ProtocolParams
    finite: FiniteSizeParams
    v_mode: str  # worst-case search treatment of the modulation variances
    i_ab_worst: bool  # evaluate the mutual information at the worst corner too
    mode: str  # "theory" or "montecarlo"
    seed: int


def _get_float(cp: configparser.ConfigParser, sect: str, key: str, default: float | None = None) -> float:
    if not cp.has_option(sect, key):
        return default
    raw = cp.get(sect, key)
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r} in section [{sect}] is not a number: {raw!r}") from exc


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario config file."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}") from exc

    for sect in cp.sections():
        if sect not in _SCHEMA:
            raise ConfigError(f"unknown section [{sect}]")
        required, optional = _SCHEMA[sect]
        for key in cp[sect]:
            if key not in required and key not in optional:
                raise ConfigError(f"unknown key {key!r} in section [{sect}]")
        for key in required:
            if key not in cp[sect]:
                raise ConfigError(f"missing key {key!r} in section [{sect}]")
    for sect in _REQUIRED_SECTIONS:
        if sect not in cp:
            raise ConfigError(f"missing section [{sect}]")

    try:
        detector = None
        if cp.has_section("detector"):
            detector = DetectorModel(
                eta=_get_float(cp, "detector", "eta"),
                v_el=_get_float(cp, "detector", "v_el_snu"),
            )
        protocol = ProtocolParams(
            v_a=_get_float(cp, "modulation", "v_a_snu"),
            v_b=_get_float(cp, "modulation", "v_b_snu"),
            l_ac=_get_float(cp, "channel", "l_ac_km"),
            l_bc=_get_float(cp, "channel", "l_bc_km"),
            eps1=_get_float(cp, "channel", "eps1_snu"),
            eps2=_get_float(cp, "channel", "eps2_snu"),
            beta=_get_float(cp, "reconciliation", "beta"),
            alpha=_get_float(cp, "channel", "alpha_db_per_km", default=0.2),
            detector=detector,
        )
        finite = FiniteSizeParams(
            n_total=_get_float(cp, "finite", "n_total"),
            est_fraction=_get_float(cp, "finite", "est_fraction", default=0.5),
            eps_pe=_get_float(cp, "finite", "eps_pe", default=1e-10),
            eps_smooth=_get_float(cp, "finite", "eps_smooth", default=1e-10),
            eps_pa=_get_float(cp, "finite", "eps_pa", default=1e-10),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    v_mode = cp.get("finite", "v_mode", fallback="estimated").strip()
    if v_mode not in ("estimated", "exact"):
        raise ConfigError(f"v_mode must be 'estimated' or 'exact', got {v_mode!r}")
    raw_worst = cp.get("finite", "i_ab_worst", fallback="false").strip().lower()
    if raw_worst not in ("true", "false"):
        raise ConfigError(f"i_ab_worst must be 'true' or 'false', got {raw_worst!r}")
    i_ab_worst = raw_worst == "true"
    mode = cp.get("mode", "mode", fallback="theory").strip()
    if mode not in ("theory", "montecarlo"):
        raise ConfigError(f"mode must be 'theory' or 'montecarlo', got {mode!r}")
    raw_seed = cp.get("mode", "seed", fallback="0").strip()
    try:
        seed = int(raw_seed)
    except ValueError as exc:
        raise ConfigError(f"seed must be an integer, got {raw_seed!r}") from exc
    if seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {seed}")
    return Scenario(
        protocol=protocol, finite=finite, v_mode=v_mode,
        i_ab_worst=i_ab_worst, mode=mode, seed=seed,
    )


def _fmt(x: float) -> str:
    return "%.12g" % x


def result_row(variable: str, value: float, r: KeyRateReport) -> list[str]:
    """CSV row for one evaluation; floats at 12 significant digits."""
    return [
        variable, _fmt(value), _fmt(r.i_ab), _fmt(r.chi_be_worst),
        _fmt(r.delta_n), _fmt(r.k), r.status, r.worst_corner,
    ]


def _worker_count() -> int:
    raw = os.environ.get("CVMDI_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"CVMDI_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"CVMDI_THREADS must be a positive integer, got {n}")
    return n


def _evaluate_grid(spec: SweepSpec, values: list[float]) -> list[KeyRateReport]:
    # Results come back in input order either way, so the CSV is identical
    # whatever the worker count.
    workers = _worker_count()
    if workers == 1 or len(values) < 2:
        return [sweep_point(spec, v) for v in values]
    chunk = max(1, len(values) // (4 * workers))
    with ProcessPoolExecutor(max_workers=min(workers, len(values))) as pool:
        return list(pool.map(functools.partial(sweep_point, spec), values, chunksize=chunk))


def _cmd_keyrate(args) -> int:
    sc = load_scenario(args.config)
    if sc.mode == "montecarlo":
        seed = args.seed if args.seed is not None else sc.seed
        report = _montecarlo_keyrate(sc, seed)
    else:
        report = finite_key_rate(
            sc.protocol, sc.finite, v_mode=sc.v_mode, i_ab_worst=sc.i_ab_worst,
        )
    w = csv.writer(sys.stdout)
    w.writerow(CSV_HEADER)
    w.writerow(result_row("l_ac_km", sc.protocol.l_ac, report))
    return 0 if report.k > 0.0 else 2


def _montecarlo_keyrate(sc: Scenario, seed: int) -> KeyRateReport:
    """Keyrate evaluation with the estimation stage actually simulated.

    Draws m pairs per channel at the true parameters, estimates, and feeds
    the measured estimate (widths included) into the finite-size rate.
    """
    m_real = sc.finite.m_est
    if m_real > MC_SAMPLE_CAP:
        raise ConfigError(
            f"montecarlo mode would draw m = {m_real:.6g} samples per channel; "
            f"cap is {MC_SAMPLE_CAP}. Lower n_total or est_fraction, or use theory mode."
        )
    m = int(m_real)
    if m < 2:
        raise ConfigError(f"montecarlo mode needs at least 2 estimation samples, got m = {m_real:.6g}")
    truth = pre_bs_channel_params(sc.protocol)
    s1 = generate_samples(truth.t1p, truth.s1p2, sc.protocol.v_a, m, seed, stream=(0,))
    s2 = generate_samples(truth.t2p, truth.s2p2, sc.protocol.v_b, m, seed, stream=(1,))
    est = channel_estimate(mle_estimate(s1), mle_estimate(s2), m, sc.finite.eps_pe)
    return finite_key_rate(
        sc.protocol, sc.finite, estimate=est, v_mode=sc.v_mode, i_ab_worst=sc.i_ab_worst,
    )


def _cmd_sweep(args) -> int:
    sc = load_scenario(args.config)
    if args.out is None:
        raise ConfigError("sweep requires --out")
    points = args.points
    if points is None and args.step is None:
        points = 50
    try:
        spec = SweepSpec(
            protocol=sc.protocol,
            finite=None if args.asymptotic else sc.finite,
            variable=args.variable,
            lo=args.lo,
            hi=args.hi,
            points=points,
            tolerance=args.step,
            log_spacing=args.log,
            v_mode=sc.v_mode,
            i_ab_worst=sc.i_ab_worst,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    values = [float(v) for v in spec.grid()]
    reports = _evaluate_grid(spec, values)
    try:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for v, r in zip(values, reports):
                w.writerow(result_row(spec.variable, v, r))
    except OSError as exc:
        print(f"error: cannot write {args.out!r}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(reports)} rows to {args.out}")
    return 0


def _cmd_optimize(args) -> int:
    sc = load_scenario(args.config)
    opt = optimal_modulation(
        sc.protocol,
        None if args.asymptotic else sc.finite,
        v_lo=args.v_lo,
        v_hi=args.v_hi,
        v_mode=sc.v_mode,
    )
    rows = [["v_star", "k_star", "boundary"],
            [_fmt(opt.v_star), _fmt(opt.k_star), "true" if opt.boundary else "false"]]
    code = _write_csv(args.out, rows)
    if code != 0:
        return code
    kind = "boundary of the search range" if opt.boundary else "interior"
    print(f"v_star = {opt.v_star:.6g} SNU ({kind}), k_star = {opt.k_star:.6g} bits/use")
    return 0 if opt.k_star > 0.0 else 2


def _cmd_frontier(args) -> int:
    sc = load_scenario(args.config)
    grid = np.linspace(args.lo, args.hi, args.points)
    rows = distance_frontier(sc.protocol, None if args.asymptotic else sc.finite, grid)
    table = [["l_bc_km", "max_l_ac_km"]] + [[_fmt(b), _fmt(a)] for b, a in rows]
    code = _write_csv(args.out, table)
    if code != 0:
        return code
    if not rows:
        print("no secure region anywhere on the grid")
        return 2
    l_bc, l_ac = rows[-1]
    print(f"max arm B length with positive rate: {l_bc:.6g} km (arm A reach there: {l_ac:.6g} km)")
    return 0


def _cmd_mc_coverage(args) -> int:
    sc = load_scenario(args.config)
    seed = args.seed if args.seed is not None else sc.seed
    truth = pre_bs_channel_params(sc.protocol)
    if args.channel == 1:
        t, s2, v = truth.t1p, truth.s1p2, sc.protocol.v_a
    else:
        t, s2, v = truth.t2p, truth.s2p2, sc.protocol.v_b
    try:
        rep = coverage_experiment(
            t, s2, v, m=args.m, eps_pe=sc.finite.eps_pe, trials=args.trials, seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ks = stats.kstest(rep.standardized_t, "norm")
    nominal = 1.0 - sc.finite.eps_pe
    table = [["parameter", "coverage", "nominal", "trials", "m"]]
    for name in ("t_prime", "sigma2", "v_mod"):
        table.append([name, _fmt(rep.coverage[name]), _fmt(nominal), str(rep.trials), str(rep.m)])
    code = _write_csv(args.out, table)
    if code != 0:
        return code
    print(
        f"min coverage = {min(rep.coverage.values()):.4f} (nominal {nominal:.10g}); "
        f"KS p = {ks.pvalue:.4g}; scaled noise mean = {rep.sigma2_scaled_mean:.2f} "
        f"(expect {args.m - 1})"
    )
    return 0


def _write_csv(out: str | None, rows: list[list[str]]) -> int:
    if out is None:
        csv.writer(sys.stdout).writerows(rows)
        return 0
    try:
        with open(out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    except OSError as exc:
        print(f"error: cannot write {out!r}: {exc}", file=sys.stderr)
        return 1
    return 0


class _Parser(argparse.ArgumentParser):
    # Usage mistakes exit 1; argparse's default 2 is reserved for "no key".
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvmdi", description="Finite-size key-rate numerics for the relayed protocol.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario config file")
        sp.add_argument("--out", default=None, help="output CSV path (default: stdout)")
        sp.add_argument("--seed", type=int, default=None, help="override the [mode] seed")

    kr = sub.add_parser("keyrate", help="evaluate one scenario")
    common(kr)

    sw = sub.add_parser("sweep", help="sweep one variable, write curve data")
    common(sw)
    sw.add_argument("--variable", required=True, choices=_SWEEP_VARIABLES)
    sw.add_argument("--from", dest="lo", type=float, required=True, help="sweep start")
    sw.add_argument("--to", dest="hi", type=float, required=True, help="sweep end")
    sw.add_argument("--points", type=int, default=None, help="grid size (default 50)")
    sw.add_argument("--step", type=float, default=None, help="linear step instead of --points")
    sw.add_argument("--log", action="store_true", help="log-spaced grid")
    sw.add_argument("--asymptotic", action="store_true", help="ignore [finite], evaluate the asymptotic rate")

    op = sub.add_parser("optimize", help="search the joint modulation variance")
    common(op)
    op.add_argument("--v-lo", type=float, default=0.1, help="search lower bound, SNU")
    op.add_argument("--v-hi", type=float, default=1e6, help="search upper bound, SNU")
    op.add_argument("--asymptotic", action="store_true")

    fr = sub.add_parser("frontier", help="secure-distance boundary over arm B lengths")
    common(fr)
    fr.add_argument("--from", dest="lo", type=float, default=0.0, help="arm B grid start, km")
    fr.add_argument("--to", dest="hi", type=float, default=15.0, help="arm B grid end, km")
    fr.add_argument("--points", type=int, default=31)
    fr.add_argument("--asymptotic", action="store_true")

    mc = sub.add_parser("mc-coverage", help="empirical confidence-interval coverage")
    common(mc)
    mc.add_argument("--m", type=int, default=10_000, help="samples per trial")
    mc.add_argument("--trials", type=int, default=2_000)
    mc.add_argument("--channel", type=int, choices=(1, 2), default=1, help="which arm to study")

    return parser


_HANDLERS = {
    "keyrate": _cmd_keyrate,
    "sweep": _cmd_sweep,
    "optimize": _cmd_optimize,
    "frontier": _cmd_frontier,
    "mc-coverage": _cmd_mc_coverage,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EstimationFailureError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
