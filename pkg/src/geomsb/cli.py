"""Command-line front end: ``geomsb {weights,expect,expand,mc,verify}``.

Every command writes one table (CSV by default, JSON records with
``--format json``) with a fixed column order. Floats are printed with 17
significant digits so reruns diff cleanly. Exit codes: 0 success, 1 a
verification check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Any, Callable, Sequence

import numpy as np

from . import expansions, occupancy, specialfn, tail_measure
from ._quadrature import graded_breaks, integrate
from .montecarlo import McConfig, mc_mean_Kn
from .priors import LogGamma, Uniform, parse_prior
from .weights import WeightFamily, tail_mass, weights_upto

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

PROPOSITIONS = ("fixed-p", "uniform-s2", "loggamma-m", "rho", "negbin-s3")
FORMATS = ("csv", "json")


class UsageError(Exception):
    pass


@dataclass
class ExperimentSpec:
    """Resolved configuration of one CLI run (config file values, then flags)."""

    command: str
    family: int = 2
    prior: str = "uniform"
    p: float | None = None
    J: int = 10
    proposition: str | None = None
    m: int = 1
    rho: float = 0.5
    paired: bool = False
    n: int = 1000
    n_grid: tuple[float, ...] = ()
    t_grid: tuple[float, ...] = ()
    x_grid: tuple[float, ...] = ()
    eps: float = 1e-10
    seed: int = 0
    reps: int = 1000
    workers: int = 1
    tolerance: float | None = None
    out: str | None = None
    format: str = "csv"


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def parse_grid(text) -> tuple[float, ...]:
    """Comma list ``10,100,1000`` or decade range ``1e1..1e6`` (times 10 per step)."""
    if isinstance(text, (list, tuple)):
        values = [float(v) for v in text]
    elif ".." in str(text):
        lo, hi = (float(v) for v in str(text).split(".."))
        if not (lo > 0 and hi > 0):
            raise UsageError(f"decade range needs positive bounds: {text!r}")
        step = 1.0 if lo <= hi else -1.0
        count = int(round(math.log10(hi / lo) * step))
        if not math.isclose(lo * 10.0 ** (step * count), hi, rel_tol=1e-9):
            raise UsageError(f"decade range endpoints must differ by a power of ten: {text!r}")
        values = [float(f"{lo * 10.0 ** (step * k):.15g}") for k in range(count + 1)]
    else:
        values = [float(v) for v in str(text).split(",") if v.strip()]
    if not values:
        raise UsageError("empty grid")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError(f"grid must be strictly increasing: {text!r}")
    return tuple(values)


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return "" if value is None else str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return float(f"{v:.17g}") if math.isfinite(v) else format_value(v)
    return value


def render(columns: Sequence[str], rows: Sequence[dict], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
        return buf.getvalue()
    records = [{c: _json_value(row.get(c)) for c in columns} for row in rows]
    return json.dumps(records, indent=2) + "\n"


def _family(spec: ExperimentSpec) -> WeightFamily:
    try:
        return WeightFamily(spec.family)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

WEIGHT_COLUMNS = ("j", "w_j", "cumulative", "tail", "normalization_defect")


def cmd_weights(spec: ExperimentSpec):
    if spec.p is None:
        raise UsageError("weights needs --p")
    family = _family(spec)
    w = weights_upto(family, spec.p, spec.J)
    cumulative = np.cumsum(w)
    rows = []
    for j in range(1, spec.J + 1):
        tail = tail_mass(family, spec.p, j)
        rows.append({
            "j": j,
            "w_j": w[j - 1],
            "cumulative": cumulative[j - 1],
            "tail": tail,
            "normalization_defect": cumulative[j - 1] + tail - 1.0,
        })
    return WEIGHT_COLUMNS, rows, EXIT_OK


EXPECT_COLUMNS = ("n", "family", "prior", "expected_Kn", "phi", "gap", "bound", "gap_within_bound")


def cmd_expect(spec: ExperimentSpec):
    family = _family(spec)
    grid = spec.n_grid or (10.0, 100.0, 1000.0)
    if spec.p is not None:
        target, label = spec.p, f"p={spec.p:g}"
    else:
        target = parse_prior(spec.prior)
        label = target.label
    rows = []
    for n in grid:
        if n != int(n) or n < 2:
            raise UsageError("n-grid entries must be integers >= 2")
        gap = occupancy.poissonization_gap(target, family, int(n), spec.eps)
        rows.append({
            "n": int(n),
            "family": family.s,
            "prior": label,
            "expected_Kn": gap.exact,
            "phi": gap.poissonized,
            "gap": gap.gap,
            "bound": gap.bound,
            "gap_within_bound": gap.gap <= gap.bound + 4.0 * spec.eps,
        })
    return EXPECT_COLUMNS, rows, EXIT_OK


_EXPAND_BASE = ("proposition", "argument_kind", "argument", "reference", "reference_method")
_EXPAND_TAIL = ("predicted", "residual", "normalized_residual", "ratio", "ratio_error")


def _term_labels(proposition: str, kind: str) -> tuple[str, ...]:
    if proposition == "fixed-p":
        return ("floor", "gamma/|log(1-p)|")
    if proposition == "uniform-s2":
        return ("L^2/2", "-gamma L") if kind == "x" else ("L^2/2", "-gamma L", "tauberian")
    if proposition == "loggamma-m":
        return ("L^(m+2)/(m+2)!",) if kind == "x" else ("L^(m+2)/(m+2)!", "tauberian")
    if proposition == "rho":
        return ("L^(rho+2)/Gamma(rho+3)",)
    base = ("L^2/2", "L log L", "-gamma L")
    return base + (("-(1+log 2) L",) if kind == "x" else ("tauberian", "-(1+log 2) L"))


def _expansion(spec: ExperimentSpec, kind: str, value: float):
    prop = spec.proposition
    eps = spec.eps
    kw = {kind: int(value) if kind == "n" else value}
    if prop == "fixed-p":
        if kind != "n" or spec.p is None:
            raise UsageError("fixed-p needs --p and --n-grid")
        return expansions.expand_fixed_p(spec.p, int(value), eps)
    if prop == "uniform-s2":
        return expansions.expand_uniform_s2(eps=eps, **kw)
    if prop == "loggamma-m":
        if spec.m == 0:
            raise UsageError("loggamma-m needs --m >= 1 (m = 0 is uniform-s2)")
        return expansions.expand_loggamma_m(spec.m, eps=eps, **kw)
    if prop == "rho":
        if kind == "x":
            raise UsageError("rho takes --n-grid or --t-grid")
        return expansions.expand_rho(spec.rho, eps=eps, **kw)
    return expansions.expand_negbin_s3(eps=eps, **kw)


def cmd_expand(spec: ExperimentSpec):
    if spec.proposition not in PROPOSITIONS:
        raise UsageError(f"proposition must be one of {', '.join(PROPOSITIONS)}")
    grids = [(k, g) for k, g in (("n", spec.n_grid), ("t", spec.t_grid), ("x", spec.x_grid)) if g]
    if len(grids) != 1:
        raise UsageError("expand needs exactly one of --n-grid, --t-grid, --x-grid")
    kind, grid = grids[0]
    labels = _term_labels(spec.proposition, kind)
    columns = _EXPAND_BASE + tuple(f"term:{lab}" for lab in labels) + _EXPAND_TAIL
    paired = spec.paired and spec.proposition == "negbin-s3" and kind != "x"
    if paired:
        columns += ("s2_reference", "difference", "difference_ratio")
    rows = []
    for value in grid:
        try:
            report = _expansion(spec, kind, value)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        row = {
            "proposition": spec.proposition,
            "argument_kind": kind,
            "argument": int(value) if kind == "n" else value,
            "reference": report.reference,
            "reference_method": report.reference_method,
            "predicted": report.predicted_total,
            "residual": report.residual,
            "normalized_residual": report.normalized_residual,
            "ratio": report.ratio,
            "ratio_error": abs(report.ratio - 1.0),
        }
        for label, term in report.terms:
            row[f"term:{label}"] = term
        if paired:
            s2 = expansions.expand_uniform_s2(eps=spec.eps, **{kind: row["argument"]})
            L = math.log(value)
            row["s2_reference"] = s2.reference
            row["difference"] = report.reference - s2.reference
            row["difference_ratio"] = row["difference"] / (L * math.log(L))
        rows.append(row)
    return columns, rows, EXIT_OK


MC_COLUMNS = ("n", "reps", "seed", "family", "prior", "mean_Kn", "std_error",
              "quadrature", "z_score", "within_3se")


def cmd_mc(spec: ExperimentSpec):
    family = _family(spec)
    prior = parse_prior(spec.prior)
    try:
        config = McConfig(spec.n, spec.reps, spec.seed, prior, family)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = mc_mean_Kn(config, workers=spec.workers)
    reference = occupancy.expected_Kn(prior, family, spec.n, spec.eps)
    diff = result.mean_Kn - reference
    z = diff / result.std_error if result.std_error > 0 else (0.0 if abs(diff) < 1e-9 else math.inf)
    row = {
        "n": spec.n, "reps": spec.reps, "seed": spec.seed, "family": family.s,
        "prior": prior.label, "mean_Kn": result.mean_Kn, "std_error": result.std_error,
        "quadrature": reference, "z_score": z, "within_3se": abs(diff) <= 3.0 * result.std_error + 1e-9,
    }
    return MC_COLUMNS, [row], EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

VERIFY_COLUMNS = ("check", "value", "tolerance", "passed")


@dataclass(frozen=True)
class Check:
    name: str
    measure: Callable[[], float]
    tolerance: float


def _gamma_identity() -> float:
    breaks = np.concatenate((graded_breaks(0.0, 1.0, 60), np.arange(2.0, 61.0)))
    value, _ = integrate(lambda t: 1.0 - specialfn._f_safe(t), breaks, order=20, rtol=1e-14)
    return abs(value - specialfn.EULER_GAMMA)


def _f_asymptote() -> float:
    t = np.linspace(15.0, 40.0, 251)
    return float(np.max(np.abs(specialfn.one_minus_f(t) * np.exp(t) - 0.5)))


def _f_monotone() -> float:
    values = specialfn.f_t(np.logspace(-12, np.log10(50.0), 10**4))
    return float(max(0.0, -np.min(np.diff(values))))


def _F_expansion() -> float:
    x = np.linspace(5.0, 40.0, 141)
    return float(np.max(np.abs(specialfn.F_cap(x) - (x - specialfn.EULER_GAMMA)) * np.exp(x)))


def _lambert_roundtrip() -> float:
    worst = 0.0
    ks = np.arange(1, 13)
    for z in np.concatenate((-specialfn.INV_E + 10.0 ** -ks, -(10.0 ** -ks))):
        for branch in specialfn.LambertBranch:
            w = specialfn.lambert_w(branch, z)
            worst = max(worst, abs(w * math.exp(w) - z) / abs(z))
    return worst


def _s3_inversion() -> float:
    worst = 0.0
    for p in np.linspace(0.05, 0.95, 19):
        w1 = p * (1.0 + p) / 2.0
        for k in range(11):
            x = w1 * 10.0**-k
            m = tail_measure.m_given_p_s3(x, p)
            w = p * (1.0 - p) ** m * (1.0 + p + p * m) / 2.0
            worst = max(worst, abs(w - x) / x)
    return worst


def _weights_normalization() -> float:
    worst = 0.0
    for s in (2, 3, 4, 5):
        for p in (0.1, 0.5, 0.9):
            for J in (1, 10, 100):
                defect = weights_upto(s, p, J).sum() + tail_mass(s, p, J) - 1.0
                worst = max(worst, abs(defect))
    return worst


def _bracketing() -> float:
    worst = 0.0
    for s in (2, 3):
        for x in (1e-3, 1e-6):
            m = tail_measure.m_of_x(Uniform(), s, x)
            nu = tail_measure.nu_arrow(Uniform(), s, x)
            worst = max(worst, m - nu, nu - m - 1.0)
    return max(worst, 0.0)


def _poissonization() -> float:
    worst = -math.inf
    for p in (0.1, 0.5, 0.9):
        for n in (10, 1000):
            gap = occupancy.poissonization_gap(p, 2, n)
            worst = max(worst, gap.gap - gap.bound)
    return max(worst, 0.0)


def _de_haan(prior, power: int, target: float) -> Callable[[], float]:
    def measure():
        est = expansions.de_haan_estimate(
            lambda y: tail_measure.m_of_x(prior, 2, y), 1e-12, 2.0, expansions.log_power(power))
        return abs(est - target) / abs(target)
    return measure


def default_checks() -> list[Check]:
    return [
        Check("gamma_identity", _gamma_identity, 1e-8),
        Check("f_asymptote", _f_asymptote, 0.05),
        Check("f_monotone", _f_monotone, 0.0),
        Check("F_expansion", _F_expansion, 2.0),
        Check("lambert_roundtrip", _lambert_roundtrip, 1e-12),
        Check("s3_inversion", _s3_inversion, 1e-10),
        Check("weights_normalization", _weights_normalization, 1e-12),
        Check("bracketing", _bracketing, 0.0),
        Check("poissonization", _poissonization, 0.0),
        Check("de_haan_uniform", _de_haan(Uniform(), 1, 1.0), 0.10),
        Check("de_haan_loggamma_1", _de_haan(LogGamma(1), 2, -0.5), 0.10),
        Check("de_haan_loggamma_2", _de_haan(LogGamma(2), 3, expansions.de_haan_constant(2)), 0.15),
    ]


def cmd_verify(spec: ExperimentSpec):
    rows = []
    failed = []
    for check in default_checks():
        tol = check.tolerance if spec.tolerance is None else spec.tolerance
        value = check.measure()
        passed = bool(value <= tol)
        rows.append({"check": check.name, "value": value, "tolerance": tol, "passed": passed})
        if not passed:
            failed.append(check.name)
    _report_verify(rows, failed)
    return VERIFY_COLUMNS, rows, EXIT_CHECK_FAILED if failed else EXIT_OK


def _use_color(stream) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _report_verify(rows, failed):
    color = _use_color(sys.stderr)
    for row in rows:
        status = "PASS" if row["passed"] else "FAIL"
        if color:
            status = ("\033[32m" if row["passed"] else "\033[31m") + status + "\033[0m"
        print(f"{status} {row['check']}", file=sys.stderr)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)


COMMANDS = {
    "weights": cmd_weights,
    "expect": cmd_expect,
    "expand": cmd_expand,
    "mc": cmd_mc,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentSpec fields; flags override it")
    common.add_argument("--family", type=int, help="negative binomial scale s (2 = geometric)")
    common.add_argument("--prior", help="uniform, loggamma:m or rho:v")
    common.add_argument("--p", type=float, help="fixed success probability")
    common.add_argument("--eps", type=float, help="truncation tolerance")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=FORMATS)

    parser = argparse.ArgumentParser(prog="geomsb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", parents=[common], help="first J weights")
    p.add_argument("--J", type=int)

    p = sub.add_parser("expect", parents=[common], help="E(K_n), Phi(n) and the Poissonization bound")
    p.add_argument("--n-grid")

    p = sub.add_parser("expand", parents=[common], help="asymptotic expansion vs reference")
    p.add_argument("proposition", choices=PROPOSITIONS)
    p.add_argument("--m", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--paired", action="store_true", default=None,
                   help="negbin-s3: add the s = 3 minus s = 2 difference columns")
    p.add_argument("--n-grid")
    p.add_argument("--t-grid")
    p.add_argument("--x-grid")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo mean of K_n")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("verify", parents=[common], help="run the invariant checks")
    p.add_argument("--tolerance", type=float, help="override every check tolerance")
    return parser


_GRID_KEYS = ("n_grid", "t_grid", "x_grid")


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    values: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            values[key] = value
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in _GRID_KEYS:
        if key in values:
            values[key] = parse_grid(values[key])
    spec = ExperimentSpec(**values)
    if spec.format not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}")
    return spec


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        spec = resolve_spec(args)
        columns, rows, code = COMMANDS[spec.command](spec)
    except (UsageError, ValueError) as exc:
        print(f"geomsb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = render(columns, rows, spec.format)
    if spec.out:
        with open(spec.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
