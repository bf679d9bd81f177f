"""Command-line driver: ``permclust <command> [flags]``.

Commands: exact, estimate, bounds, scaling, supercluster, renewal, verify.
Tables go out as CSV (header row, floats to 17 significant digits) or JSON.
Flags override ``--config`` entries, which override defaults; the default
seed comes from ``PERMCLUST_SEED`` when set.

Exit codes: 0 success, 1 usage or validation error, 2 numeric or capacity refusal.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shlex
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from . import analytic, exact, mc
from .exact import EnumerationCapError
from .permcore import ClusterQuery, Permutation, PermutationError
from .shiftdist import DistributionError, Geometric, ShiftDistribution, parse_distribution

COMMANDS = ("exact", "estimate", "bounds", "scaling", "supercluster", "renewal", "verify")
EXIT_OK, EXIT_USAGE, EXIT_REFUSED = 0, 1, 2

# flag -> (type, default); every command accepts every flag and ignores the ones it does not use
FLAGS = {
    "dist": (str, None),
    "q": (float, None),
    "n": (str, None),
    "l": (str, None),
    "k": (str, None),
    "pattern": (str, None),
    "alpha": (float, 0.5),
    "c": (float, 1.0),
    "d": (float, 0.5),
    "samples": (int, 100000),
    "seed": (int, None),
    "confidence": (float, 0.99),
    "workers": (int, 1),
    "out": (str, None),
    "format": (str, "csv"),
    "cap-override": (bool, False),
}


class UsageError(Exception):
    pass


class Refusal(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class ExperimentSpec:
    command: str
    options: Dict[str, object] = field(default_factory=dict)

    def get(self, name):
        return self.options.get(name, FLAGS[name][1])

    def to_argv(self) -> List[str]:
        argv = [self.command]
        for name in FLAGS:
            if name not in self.options or self.options[name] is None:
                continue
            val = self.options[name]
            if FLAGS[name][0] is bool:
                if val:
                    argv.append(f"--{name}")
                continue
            argv += [f"--{name}", _text(val)]
        return argv

    def to_text(self) -> str:
        return shlex.join(self.to_argv())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentSpec":
        return parse_args(shlex.split(text))


def _text(val) -> str:
    return repr(val) if isinstance(val, float) else str(val)


def _build_parser() -> _Parser:
    parser = _Parser(prog="permclust", description="Clusters of consecutive values in random permutations.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="flat key = value file mirroring flag names")
        for name, (typ, _) in FLAGS.items():
            if typ is bool:
                p.add_argument(f"--{name}", action="store_true", default=None)
            else:
                p.add_argument(f"--{name}", type=typ, default=None)
    return parser


def _read_config(path: str) -> Dict[str, object]:
    out: Dict[str, object] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for num, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().lstrip("-").replace("_", "-")
        if not sep or key not in FLAGS:
            raise UsageError(f"{path}:{num}: expected 'flag = value' with a known flag")
        typ = FLAGS[key][0]
        val = val.strip().strip('"').strip("'")
        try:
            out[key] = val.lower() in ("1", "true", "yes") if typ is bool else typ(val)
        except ValueError as exc:
            raise UsageError(f"{path}:{num}: bad value for {key}: {val}") from exc
    return out


def parse_args(argv: Sequence[str]) -> ExperimentSpec:
    ns = _build_parser().parse_args(list(argv))
    if ns.command is None:
        raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
    options: Dict[str, object] = {}
    if ns.config:
        options.update(_read_config(ns.config))
    for name in FLAGS:
        val = getattr(ns, name.replace("-", "_"))
        if val is not None:
            options[name] = val
    if options.get("format", "csv") not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    return ExperimentSpec(ns.command, options)


# --------------------------------------------------------------------------
# option helpers

def _ints(spec: ExperimentSpec, name: str, required: bool = True) -> Optional[List[int]]:
    raw = spec.get(name)
    if raw is None:
        if required:
            raise UsageError(f"--{name} is required for {spec.command}")
        return None
    try:
        return [int(x) for x in str(raw).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"--{name} expects comma-separated integers, got {raw!r}") from exc


def _one_int(spec, name, required=True):
    vals = _ints(spec, name, required)
    if vals is None:
        return None
    if len(vals) != 1:
        raise UsageError(f"--{name} takes a single integer for {spec.command}")
    return vals[0]


def _measure(spec: ExperimentSpec, default_uniform: bool = False):
    dist, q = spec.get("dist"), spec.get("q")
    if dist is not None and q is not None:
        raise UsageError("give either --dist or --q, not both")
    if dist is not None:
        if dist.strip().lower() == "uniform":
            return "uniform", "uniform"
        d = parse_distribution(dist)
        return d, d.spec()
    if q is not None:
        return float(q), f"mallows:q={float(q)!r}"
    if default_uniform:
        return "uniform", "uniform"
    raise UsageError(f"{spec.command} needs --dist or --q")


def _shift(spec: ExperimentSpec) -> ShiftDistribution:
    m, _ = _measure(spec)
    if isinstance(m, ShiftDistribution):
        return m
    if isinstance(m, float) and 0.0 < m < 1.0:
        return Geometric(m)
    raise UsageError(f"{spec.command} needs a distribution p (use --dist or --q in (0, 1))")


def _pattern(spec) -> Optional[Permutation]:
    raw = spec.get("pattern")
    return None if raw is None else Permutation.from_text(str(raw))


def _config(spec) -> mc.McConfig:
    seed = spec.get("seed")
    if seed is None:
        seed = int(os.environ.get("PERMCLUST_SEED", "0"))
    return mc.McConfig(int(spec.get("samples")), int(seed), float(spec.get("confidence")),
                       int(spec.get("workers")))


def _queries(spec, n: int) -> List[ClusterQuery]:
    l = _one_int(spec, "l")
    pattern = _pattern(spec)
    ks = _ints(spec, "k", required=False)
    if ks is None:
        ks = list(range(1, n - l + 2))
    return [ClusterQuery(n, l, k, pattern) for k in ks]


def _ptext(p: Optional[Permutation]) -> str:
    return "" if p is None else str(p)


# --------------------------------------------------------------------------
# commands; each returns (columns, rows, extra) where extra feeds the JSON form only

def cmd_exact(spec):
    measure, label = _measure(spec)
    n = _one_int(spec, "n")
    rows = []
    for q in _queries(spec, n):
        res = exact.exact_event_prob(n, measure, q, cap_override=bool(spec.get("cap-override")))
        rows.append([n, q.l, q.k, _ptext(q.pattern), label, res.probability, res.support_size, res.method])
    return ["n", "l", "k", "pattern", "measure", "probability", "support_size", "method"], rows, {}


def cmd_estimate(spec):
    measure, label = _measure(spec)
    n = _one_int(spec, "n")
    cfg = _config(spec)
    qs = _queries(spec, n)
    reps = mc.estimate_cluster_probs(measure, n, qs, cfg)
    rows = [[n, q.l, q.k, _ptext(q.pattern), label, r.estimate, r.std_error, r.ci_low, r.ci_high,
             r.samples, cfg.seed, cfg.confidence] for q, r in zip(qs, reps)]
    cols = ["n", "l", "k", "pattern", "measure", "estimate", "std_error", "ci_low", "ci_high",
            "samples", "seed", "confidence"]
    return cols, rows, {}


def cmd_bounds(spec):
    d = _shift(spec)
    n = _one_int(spec, "n")
    rows = []
    cap = exact.HARD_CAP if spec.get("cap-override") else exact.DEFAULT_CAP
    for q in _queries(spec, n):
        if q.pattern is not None:
            raise UsageError("bounds cover unpatterned events only")
        ex = exact.exact_cluster_prob(n, d, q, cap_override=bool(spec.get("cap-override"))) if n <= cap else None
        rep = analytic.bounds_report(d, q, ex)
        rows.append([n, q.l, q.k, rep.measure, rep.lower, rep.upper, rep.exact, rep.mallows_lower,
                     "; ".join(rep.notes)])
    return ["n", "l", "k", "measure", "lower", "upper", "exact", "mallows_lower", "notes"], rows, {}


def cmd_scaling(spec):
    ns = _ints(spec, "n")
    l = _one_int(spec, "l", required=False) or 2
    ks = _ints(spec, "k", required=False)
    grid = analytic.ScalingGrid(float(spec.get("alpha")), float(spec.get("c")), l, tuple(ns),
                                float(spec.get("d")), tuple(ks) if ks else None)
    cfg = _config(spec)
    rows = []
    for r in mc.scaling_experiment(grid, cfg):
        rows.append([r.n, r.q, grid.l, r.k, r.report.estimate, r.report.std_error, r.report.ci_low,
                     r.report.ci_high, r.normalized, r.envelope_lower, r.envelope_upper, r.report.samples])
    cols = ["n", "q", "l", "k", "estimate", "std_error", "ci_low", "ci_high", "normalized",
            "envelope_lower", "envelope_upper", "samples"]
    return cols, rows, {"alpha": grid.alpha, "c": grid.c}


def cmd_supercluster(spec):
    d = _shift(spec)
    k_raw = spec.get("k")
    fixed = k_raw is not None and str(k_raw).strip().lower() != "interior"
    k_val = _one_int(spec, "k") if fixed else None
    limit = analytic.supercluster_limit(d, k_val if fixed else "interior")
    rows = [["limit", "", "", k_val if fixed else "interior", limit, "", "", ""]]
    ns = _ints(spec, "n", required=False) or []
    ls = _ints(spec, "l", required=False) or []
    cfg = _config(spec)
    for n in ns:
        k = k_val if fixed else n // 2
        qs = [ClusterQuery(n, l, k) for l in ls if k + l - 1 <= n]
        for q, r in zip(qs, mc.estimate_cluster_probs(d, n, qs, cfg)):
            rows.append(["mc", n, q.l, k, r.estimate, r.std_error, r.ci_low, r.ci_high])
    cols = ["kind", "n", "l", "k", "value", "std_error", "ci_low", "ci_high"]
    return cols, rows, {"measure": d.spec(), "positive_recurrent": math.isfinite(d.mean())}


def cmd_renewal(spec):
    from .sampler import renewal_statistics
    from .shiftdist import first_renewal_pmf, renewal_sequence

    d = _shift(spec)
    length = _one_int(spec, "n", required=False) or 20
    cfg = _config(spec)
    st = renewal_statistics(d, cfg.samples, length, cfg.seed, workers=cfg.workers)
    u = renewal_sequence(d, length)
    f = first_renewal_pmf(d, length)
    emp_f = st.first_renewal_freq()
    rows = [[n, st.renewal_freq[n - 1], st.renewal_se[n - 1], u[n], emp_f[n - 1], f[n - 1]]
            for n in range(1, length + 1)]
    lim = analytic.log_renewal_limit(d)
    extra = {
        "measure": d.spec(),
        "mean_t1_empirical": st.mean_t1,
        "mean_t1_std_error": st.mean_t1_se,
        "censored": st.censored,
        "lim_u": math.exp(lim.value) if lim.value > -math.inf else 0.0,
        "mean_t1_theory": math.exp(-lim.value) if lim.value > -math.inf else math.inf,
    }
    return ["n", "renewal_freq", "std_error", "u_n", "first_renewal_freq", "f_n"], rows, extra


def cmd_verify(spec):
    from .verify import run_checks

    results = run_checks(workers=int(spec.get("workers")))
    rows = [[r.name, "pass" if r.passed else "fail", r.detail] for r in results]
    return ["check", "status", "detail"], rows, {"all_passed": all(r.passed for r in results)}


HANDLERS = {
    "exact": cmd_exact,
    "estimate": cmd_estimate,
    "bounds": cmd_bounds,
    "scaling": cmd_scaling,
    "supercluster": cmd_supercluster,
    "renewal": cmd_renewal,
    "verify": cmd_verify,
}


# --------------------------------------------------------------------------
# output

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def _json_value(v):
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def render(columns, rows, extra, fmt: str) -> str:
    if fmt == "json":
        doc = {k: _json_value(v) for k, v in extra.items()}
        doc["rows"] = [{c: _json_value(v) for c, v in zip(columns, row)} for row in rows]
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def run(spec: ExperimentSpec, stdout=None) -> int:
    stdout = stdout or sys.stdout
    columns, rows, extra = HANDLERS[spec.command](spec)
    text = render(columns, rows, extra, str(spec.get("format")))
    out = spec.get("out")
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    if spec.command == "verify" and not extra["all_passed"]:
        return EXIT_REFUSED
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        spec = parse_args(argv)
        return run(spec)
    except (EnumerationCapError, analytic.BoundNotCertifiedError, Refusal) as exc:
        print(f"permclust: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (UsageError, PermutationError, DistributionError, ValueError) as exc:
        print(f"permclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
