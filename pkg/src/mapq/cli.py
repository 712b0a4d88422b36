"""Command-line interface: ``mapq validate|transient|simulate|compare|lst``.

Transient and simulation results are written as long-format CSV with the
header ``t,x,state,metric,value,err`` (one metric per row). Analytic ``err``
is the inversion error estimate; simulation output repeats the Monte Carlo
standard error in ``err`` and in an extra ``se_value`` column. When
``--out`` is given, a ``.meta.json`` sidecar records the model hash, the
settings and the package version.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 comparison
failure.
"""

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MapqError, ModelError, NumericalError
from .model_core import load_model, model_from_dict

HEADER = ["t", "x", "state", "metric", "value", "err"]
SIM_HEADER = HEADER + ["se_value"]
COMPARE_HEADER = ["t", "x", "state", "metric", "analytic", "mc", "se", "z", "verdict"]
DEFAULT_METRICS = "mean,var,p_empty,p_full"
Z_LIMIT = 3.0
ABS_LIMIT = 5e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def bundled_models():
    """Names of the models shipped with the package."""
    folder = resources.files("mapq") / "fixtures"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def resolve_model(name):
    """Path of a model file; bare names refer to the bundled fixtures."""
    path = Path(name)
    if path.exists():
        return path
    candidate = resources.files("mapq") / "fixtures" / f"{name}.json"
    if candidate.is_file():
        return Path(str(candidate))
    raise UsageError(f"model file {name!r} not found (bundled: {', '.join(bundled_models())})")


def parse_grid(text):
    """``A:B:STEP`` (inclusive of ``B``) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if not step > 0:
                raise UsageError("time step must be positive")
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            grid = a + step * np.arange(max(n, 0))
        else:
            grid = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad time grid {text!r}; expected A:B:STEP") from None
    if len(grid) == 0:
        raise UsageError(f"time grid {text!r} is empty")
    if np.any(np.diff(grid) <= 0):
        raise UsageError("time grid must be strictly increasing")
    return np.round(grid, 12)


def _metrics(args):
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    if args.functionals:
        for f in args.functionals.split(","):
            f = f.strip()
            if f not in ("idle", "lost"):
                raise UsageError(f"unknown functional {f!r}; choose from idle,lost")
            names.append(f)
    if not names:
        raise UsageError("no metrics requested")
    return names


def _states(spec, label):
    if label is None:
        return list(range(spec.d))
    return [spec.state_index(label)]


def _write_rows(rows, header, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _write_meta(out, spec, command, settings, diagnostics=()):
    if not out:
        return
    meta = {"command": command, "model_hash": spec.model_hash(), "version": __version__,
            "settings": settings, "diagnostics": list(diagnostics)}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    return f"{float(v):.12g}"


# -- transient ------------------------------------------------------------------

def _transient_chunk(model_path, x, times, metrics, terms, shift):
    from .inversion import InversionConfig, invert_time_metrics

    spec = load_model(model_path)
    cfg = InversionConfig(terms=terms, shift=shift)
    res = invert_time_metrics(spec, x, times, metrics, cfg)
    return {m: (ts.values, ts.errors) for m, ts in res.items()}, cfg.diagnostics


def run_transient(spec, model_path, x, times, metrics, terms=18, shift=None, jobs=1):
    """Analytic rows ``(t, x, state, metric, value, err)`` for every state."""
    chunks = np.array_split(times, max(1, min(jobs, len(times))))
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_transient_chunk, [model_path] * len(chunks), [x] * len(chunks),
                                  chunks, [metrics] * len(chunks), [terms] * len(chunks),
                                  [shift] * len(chunks)))
    else:
        parts = [_transient_chunk(model_path, x, c, metrics, terms, shift) for c in chunks]
    rows, diagnostics = [], []
    for chunk, (res, diag) in zip(chunks, parts):
        diagnostics.extend(diag)
        for m in metrics:
            vals, errs = res[m]
            for k, t in enumerate(chunk):
                for i in range(spec.d):
                    rows.append((float(t), x, spec.labels[i], m, float(vals[k, i]), float(errs[k, i])))
    return rows, diagnostics


def _sort(rows, spec, metrics):
    order = {m: k for k, m in enumerate(metrics)}
    labels = {lab: k for k, lab in enumerate(spec.labels)}
    return sorted(rows, key=lambda r: (labels[r[2]], order[r[3]], r[0]))


def cmd_transient(args):
    path = resolve_model(args.model)
    spec = load_model(path)
    times = parse_grid(args.t)
    if times[0] <= 0:
        raise UsageError("analytic transient times must be positive")
    metrics = _metrics(args)
    states = {spec.labels[i] for i in _states(spec, args.state)}
    rows, diag = run_transient(spec, str(path), args.x, times, metrics, args.inv_terms,
                               args.inv_shift, args.jobs)
    rows = [r for r in _sort(rows, spec, metrics) if r[2] in states]
    _write_rows([(_fmt(t), _fmt(x), s, m, _fmt(v), _fmt(e)) for t, x, s, m, v, e in rows],
                HEADER, args.out)
    _write_meta(args.out, spec, "transient",
                {"x": args.x, "t": args.t, "metrics": metrics, "inv_terms": args.inv_terms,
                 "inv_shift": args.inv_shift, "state": args.state}, diag)
    for msg in diag:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


# -- simulate -------------------------------------------------------------------

def run_simulation(spec, x, times, metrics, paths, seed, dt, states):
    from .mc_simulator import SimConfig, simulate

    rows = []
    for i in states:
        cfg = SimConfig(paths=paths, dt=dt, seed=seed + i)
        est = simulate(spec, x, i, cfg, metrics=metrics, times=times)
        for m in metrics:
            vals, errs = est[m]
            for k, t in enumerate(times):
                rows.append((float(t), x, spec.labels[i], m, float(vals[k]), float(errs[k])))
    return rows


def cmd_simulate(args):
    spec = load_model(resolve_model(args.model))
    times = parse_grid(args.t)
    if times[0] < 0:
        raise UsageError("simulation times must be nonnegative")
    metrics = _metrics(args)
    rows = run_simulation(spec, args.x, times, metrics, args.paths, args.seed, args.dt,
                          _states(spec, args.state))
    rows = _sort(rows, spec, metrics)
    _write_rows([(_fmt(t), _fmt(x), s, m, _fmt(v), _fmt(e), _fmt(e)) for t, x, s, m, v, e in rows],
                SIM_HEADER, args.out)
    _write_meta(args.out, spec, "simulate",
                {"x": args.x, "t": args.t, "metrics": metrics, "paths": args.paths,
                 "seed": args.seed, "dt": args.dt, "state": args.state})
    return 0


# -- compare --------------------------------------------------------------------

def read_rows(path):
    """Rows of a transient or simulation CSV keyed by ``(t, x, state, metric)``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames not in (HEADER, SIM_HEADER):
            raise UsageError(f"{path}: header must be {','.join(HEADER)}[,se_value]")
        err_col = "se_value" if reader.fieldnames == SIM_HEADER else "err"
        out = {}
        for n, row in enumerate(reader, start=2):
            try:
                key = (round(float(row["t"]), 9), round(float(row["x"]), 9), row["state"], row["metric"])
                out[key] = (float(row["value"]), float(row[err_col]))
            except (TypeError, ValueError):
                raise UsageError(f"{path}: line {n}: malformed row") from None
    return out


def verdict_rows(analytic, mc):
    """Per-row z-scores and verdicts; ``PASS`` when ``|z| <= 3`` or ``|diff| <= 5e-3``."""
    if set(analytic) != set(mc):
        missing = sorted(set(analytic) ^ set(mc))[:3]
        raise UsageError(f"time grids or metrics do not match, e.g. {missing}")
    out = []
    for key in sorted(analytic, key=lambda k: (k[2], k[3], k[0])):
        a, _ = analytic[key]
        m, se = mc[key]
        diff = a - m
        z = diff / se if se > 0 else (0.0 if diff == 0 else np.inf * np.sign(diff))
        ok = abs(z) <= Z_LIMIT or abs(diff) <= ABS_LIMIT
        out.append((*key, a, m, se, z, "PASS" if ok else "FAIL"))
    return out


def cmd_compare(args):
    spec = load_model(resolve_model(args.model))
    analytic = read_rows(args.analytic)
    if args.sim:
        mc = read_rows(args.sim)
    else:
        keys = sorted(analytic)
        times = np.array(sorted({k[0] for k in keys}))
        metrics = sorted({k[3] for k in keys})
        xs = {k[1] for k in keys}
        if len(xs) != 1:
            raise UsageError("analytic file mixes several initial workloads")
        states = sorted({spec.state_index(k[2]) for k in keys})
        rows = run_simulation(spec, xs.pop(), times, metrics, args.paths, args.seed, args.dt, states)
        mc = {(round(t, 9), round(x, 9), s, m): (v, e) for t, x, s, m, v, e in rows}
    table = verdict_rows(analytic, mc)
    _write_rows([(_fmt(t), _fmt(x), s, m, _fmt(a), _fmt(v), _fmt(se), f"{z:.3f}", verdict)
                 for t, x, s, m, a, v, se, z, verdict in table], COMPARE_HEADER, args.out)
    fails = sum(r[-1] == "FAIL" for r in table)
    print(f"{len(table) - fails}/{len(table)} PASS", file=sys.stderr)
    return 0 if fails == 0 else 3


# -- validate and lst -----------------------------------------------------------

def cmd_validate(args):
    spec = load_model(resolve_model(args.model))
    canon = spec.canonical_json()
    again = model_from_dict(json.loads(canon)).canonical_json()
    if again != canon:
        raise NumericalError("model does not survive a serialization round trip")
    print(json.dumps({"states": spec.labels, "d": spec.d, "d_minus": spec.d_minus,
                      "capacity": spec.capacity, "model_hash": spec.model_hash()}, indent=2))
    return 0


def cmd_lst(args):
    spec = load_model(resolve_model(args.model))
    if args.alpha2 or args.alpha3:
        from .loss_idle import chi_tilde

        mat = chi_tilde(spec, args.x, args.alpha, args.alpha2, args.alpha3, args.beta).chi_x
    else:
        from .transient_workload import chi

        mat = chi(spec, args.x, args.alpha, args.beta).chi_x
    rows = [(spec.labels[i], spec.labels[j], _fmt(np.real(mat[i, j])))
            for i in _states(spec, args.state) for j in range(spec.d)]
    _write_rows(rows, ["state", "final_state", "value"], args.out)
    return 0


def build_parser():
    p = _Parser(prog="mapq", description="Transient workload of finite-buffer Markov additive queues.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, grid=True):
        sp.add_argument("--model", required=True, help="model JSON file or bundled name")
        sp.add_argument("--x", type=float, default=0.0, help="initial workload")
        sp.add_argument("--state", default=None, help="initial state label (default: all)")
        sp.add_argument("--out", default=None, help="output CSV (default: stdout)")
        if grid:
            sp.add_argument("--t", required=True, help="time grid A:B:STEP")
            sp.add_argument("--metrics", default=DEFAULT_METRICS)
            sp.add_argument("--functionals", default=None, help="idle,lost")

    def sim_opts(sp):
        sp.add_argument("--paths", type=int, default=100_000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--dt", type=float, default=1e-3)

    sp = sub.add_parser("validate", help="check a model file")
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("transient", help="analytic metrics on a time grid")
    common(sp)
    sp.add_argument("--inv-terms", type=int, default=18)
    sp.add_argument("--inv-shift", type=float, default=None)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes over the time grid")
    sp.set_defaults(func=cmd_transient)

    sp = sub.add_parser("simulate", help="Monte Carlo metrics on a time grid")
    common(sp)
    sim_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="z-scores of analytic values against Monte Carlo")
    sp.add_argument("--model", required=True)
    sp.add_argument("--analytic", required=True, help="CSV from 'mapq transient'")
    sp.add_argument("--sim", default=None, help="CSV from 'mapq simulate' (else simulate now)")
    sp.add_argument("--out", default=None)
    sim_opts(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("lst", help="transform matrix at one (alpha, beta)")
    common(sp, grid=False)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--alpha2", type=float, default=0.0, help="idle-time argument")
    sp.add_argument("--alpha3", type=float, default=0.0, help="lost-work argument")
    sp.add_argument("--beta", type=float, default=1.0)
    sp.set_defaults(func=cmd_lst)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelError, ValueError, OSError) as exc:
        print(f"mapq: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, MapqError, ArithmeticError) as exc:
        print(f"mapq: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
