"""Command-line front end.

Subcommands: solve, verify, potential, oracle, compare.  Fields go out as
CSV (or JSON), reports as JSON.  Exit codes: 0 success, 1 verification or
comparison failure, 2 configuration error, 3 numerical failure (with a JSON
diagnostic line on stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kdv, pde_oracle, verify
from .hankel import IllConditionedError, SingularDeterminantError
from .scattering import Params, PoleError

COLUMNS = kdv.FieldGrid.COLUMNS

DEFAULTS = {
    "rho": 1.0,
    "eps": None,
    "x_min": -5.0,
    "x_max": 5.0,
    "nx": 11,
    "t": [0.0],
    "h": None,
    "nodes": None,
    "method": "auto",
    "tau_weight": "rho",
    "out": None,
    "format": "csv",
    "threads": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    rho: float = 1.0
    eps: float | None = None
    x_min: float = -5.0
    x_max: float = 5.0
    nx: int = 11
    t: list = field(default_factory=lambda: [0.0])
    h: float | None = None
    nodes: int | None = None
    method: str = "auto"
    tau_weight: str = "rho"
    out: str | None = None
    format: str = "csv"
    threads: int | None = None

    def validate(self):
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ConfigError("rho must be positive")
        if self.nx < 2:
            raise ConfigError("nx must be at least 2")
        if not self.x_max > self.x_min:
            raise ConfigError("x-max must exceed x-min")
        if not self.t:
            raise ConfigError("at least one --t value is required")
        if any(not np.isfinite(v) or v < 0 for v in self.t):
            raise ConfigError("t values must be finite and non-negative")
        if self.h is not None and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.nodes is not None and self.nodes < 8:
            raise ConfigError("nodes must be at least 8")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.eps is not None and not 0 < self.eps < self.rho:
            raise ConfigError("eps must lie in (0, rho)")
        if self.out is not None:
            parent = Path(self.out).resolve().parent
            if not parent.is_dir():
                raise ConfigError(f"output directory {parent} does not exist")
        return self

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def solver_options(self) -> kdv.SolverOptions:
        if self.nodes is not None:
            # fixed node count: no doubling, so bytes depend only on the config
            return kdv.SolverOptions(method=self.method, h=self.h, nodes=self.nodes,
                                     n_max=self.nodes, tau_weight=self.tau_weight)
        return kdv.SolverOptions(method=self.method, h=self.h, tau_weight=self.tau_weight)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v) + 0.0, ".17g")  # + 0.0 folds -0 into 0


def _write_table(columns, rows, out, fmt, meta=None):
    if fmt == "json":
        payload = {"columns": list(columns), "rows": [[float(v) if not isinstance(v, bool) else v
                                                        for v in r] for r in rows]}
        if meta:
            payload["meta"] = meta
        text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_table(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        obj = json.loads(text)
        arr = np.array(obj["rows"], float)
        return {c: arr[:, i] for i, c in enumerate(obj["columns"])}
    rows = list(csv.reader(io.StringIO(text)))
    head, body = rows[0], rows[1:]
    arr = np.array([[float(v) if v != "" else np.nan for v in r] for r in body], float)
    return {c: arr[:, i] for i, c in enumerate(head)}


def _emit(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig) -> int:
    grid = kdv.evaluate_field(Params(cfg.rho), cfg.xs, cfg.t, cfg.solver_options(), cfg.threads)
    meta = dict(grid.meta, x_min=cfg.x_min, x_max=cfg.x_max, nx=cfg.nx, t=list(cfg.t))
    _write_table(COLUMNS, [r.row() for r in grid.records], cfg.out, cfg.format, meta)
    return 0


def cmd_verify(suite: str, ctx: verify.Context, out=None) -> int:
    if suite != "all" and suite not in verify.SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from "
                          f"{', '.join([*verify.SUITES, 'all'])}")
    checks = verify.run_suite(suite, ctx)
    report = [c.as_dict() for c in checks]
    text = json.dumps(report, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if all(c.status == "pass" for c in checks) else 1


def potential_rows(kind: str, xs, t: float, rho: float = 1.0, eps: float | None = None):
    """Rows (x, t, value, singular) for a named potential or reference solution."""
    p = Params(rho)
    flags = np.zeros(len(xs), bool)
    if kind == "Q":
        vals = kdv.Q_closed(xs, p)
    elif kind == "Q_eps":
        if eps is None:
            raise ConfigError("--eps is required for kind Q_eps")
        vals = np.array([kdv.Q_eps(p, eps, x, fd_check=False) for x in xs])
    elif kind == "soliton":
        vals = kdv.soliton(xs, t)
    elif kind == "positon":
        root = kdv.positon_root(t)
        j = int(np.argmin(np.abs(xs - root)))
        if xs[0] - (xs[1] - xs[0]) <= root <= xs[-1] + (xs[1] - xs[0]):
            flags[j] = True
        tau = kdv.tau_positon(xs, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(np.abs(tau) < 1e-12, np.nan, kdv.positon(np.where(
                np.abs(tau) < 1e-12, xs + 1e-3, xs), t))
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")
    return [(x, t, v, bool(f)) for x, v, f in zip(xs, np.atleast_1d(vals), flags)]


def cmd_potential(cfg: RunConfig, kind: str) -> int:
    rows = []
    for t in cfg.t:
        rows.extend(potential_rows(kind, cfg.xs, t, cfg.rho, cfg.eps))
    _write_table(("x", "t", "value", "singular"), rows, cfg.out, cfg.format,
                 {"kind": kind, "rho": cfg.rho})
    return 0


def cmd_oracle(cfg: RunConfig, u0: str, L: float | None, N: int | None, dt: float, T: float,
               lowpass: bool, report_out=None) -> int:
    if L is None:
        L = 30.0 if u0 in ("soliton", "zero") else 400.0
    if N is None:
        N = 2**12 if u0 in ("soliton", "zero") else 2**15
    grid = pde_oracle.PeriodicGrid(L, N)
    times = sorted(set(v for v in cfg.t if v > 0) | {T})
    cut = pde_oracle.radiation_cutoff(L, T) if (lowpass and u0 == "Q") else None
    icfg = pde_oracle.IntegratorConfig(dt, T, lowpass=cut)
    ev = pde_oracle.evolve(pde_oracle.initial_samples(u0, grid, cfg.rho), grid, icfg, times)
    report = {"u0": u0, "L": L, "N": N, "dt": dt, "T": T, "lowpass": cut,
              "mass_drift": float(np.ptp(ev.mass)), "momentum_drift": float(np.ptp(ev.momentum))}
    if u0 == "soliton":
        report["propagation_error"] = float(np.max(np.abs(ev.at(T) - kdv.soliton(grid.xs, T))))
    if cfg.out:
        sel = (grid.xs >= cfg.x_min) & (grid.xs <= cfg.x_max)
        rows = []
        for t, snap in zip(ev.times, ev.snapshots):
            rows.extend((x, t, u, None, None, None, None, None) for x, u in zip(grid.xs[sel], snap[sel]))
        _write_table(COLUMNS, rows, cfg.out, cfg.format, report)
    if report_out:
        Path(report_out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        _emit(report)
    return 0


def cmd_compare(formula: str, oracle: str, t: float | None, window, tol: float,
                L: float | None = None) -> int:
    a, b = _read_table(formula), _read_table(oracle)

    def pick(tab):
        if t is None or "t" not in tab:
            return tab["x"], tab["u"]
        sel = np.abs(tab["t"] - t) < 1e-12
        if not sel.any():
            raise ConfigError(f"no samples at t={t}")
        return tab["x"][sel], tab["u"][sel]

    fx, fu = pick(a)
    ox, ou = pick(b)
    if ox.shape == fx.shape and np.array_equal(ox, fx):
        rep = pde_oracle.compare_window(fx, fu, ou, oracle_x=ox, window=window, tolerance=tol)
    else:
        # the oracle must cover its whole periodic box to be resampled
        n = len(ox)
        dx = np.diff(ox)
        half = L if L is not None else -float(ox[0])
        if n & (n - 1) or np.ptp(dx) > 1e-9 * (1 + abs(dx[0])) or abs(n * dx[0] - 2 * half) > 1e-6:
            raise ConfigError("oracle samples are neither aligned with the formula samples "
                              "nor a full periodic grid")
        rep = pde_oracle.compare_window(fx, fu, ou, pde_oracle.PeriodicGrid(half, n),
                                        window=window, tolerance=tol)
    _emit(rep.as_dict())
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="JSON", help="JSON file with option values; flags win")
    p.add_argument("--rho", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--x-min", dest="x_min", type=float)
    p.add_argument("--x-max", dest="x_max", type=float)
    p.add_argument("--nx", type=int)
    p.add_argument("--t", action="append", type=float, help="time value (repeatable)")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=["csv", "json"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="positon-kdv",
        description="KdV solutions from Hankel-operator determinants for a "
                    "Wigner-von Neumann initial potential.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="evaluate u, u0, u1, tau on an (x, t) grid")
    _common(s)
    s.add_argument("--h", type=float, help="horizontal contour height (default: automatic)")
    s.add_argument("--nodes", type=int, help="fixed contour node count (no doubling)")
    s.add_argument("--method", choices=["auto", "contour", "halfline"])
    s.add_argument("--tau-weight", dest="tau_weight", choices=["rho", "half"])
    s.add_argument("--threads", type=int)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", nargs="?", default="all")
    v.add_argument("--rho", type=float, default=1.0)
    v.add_argument("--perturb-c", dest="perturb_c", type=float, default=0.0,
                   help="shift the norming constant (sensitivity smoke test)")
    v.add_argument("--out", metavar="PATH")

    pt = sub.add_parser("potential", help="tabulate Q, Q_eps, positon or soliton")
    _common(pt)
    pt.add_argument("--kind", required=True)

    o = sub.add_parser("oracle", help="run the pseudospectral PDE oracle")
    _common(o)
    o.add_argument("--u0", choices=["Q", "soliton", "zero"], default="soliton")
    o.add_argument("--L", type=float)
    o.add_argument("--N", type=int)
    o.add_argument("--dt", type=float, default=1e-4)
    o.add_argument("--T", type=float, default=1.0)
    o.add_argument("--no-lowpass", dest="lowpass", action="store_false")
    o.add_argument("--report", metavar="PATH")

    c = sub.add_parser("compare", help="compare a formula field with an oracle field")
    c.add_argument("formula")
    c.add_argument("oracle")
    c.add_argument("--t", type=float)
    c.add_argument("--window", type=float, nargs=2, default=(-8.0, 8.0))
    c.add_argument("--tol", type=float, default=5e-3)
    c.add_argument("--L", type=float, help="oracle half-length (default: -x of its first sample)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        for k, val in loaded.items():
            key = k.replace("-", "_")
            if key not in values:
                raise ConfigError(f"unknown config key {k!r}")
            values[key] = val
    for key in values:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if not isinstance(values["t"], list):
        values["t"] = [values["t"]]
    try:
        cfg = RunConfig(command=args.command, **values)
        cfg.t = [float(v) for v in cfg.t]
        cfg.nx = int(cfg.nx)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return cfg.validate()


def _fail(kind: str, exc: Exception, code: int) -> int:
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    loc = getattr(exc, "location", None) or getattr(exc, "last_time", None)
    if loc is not None:
        payload["location"] = loc
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and 2
    # stderr carries JSON lines only, so warnings are re-emitted in that form
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        code = _run(args)
    for w in caught:
        sys.stderr.write(json.dumps({"warning": w.category.__name__, "message": str(w.message)}) + "\n")
    return code


def _run(args) -> int:
    try:
        if args.command == "verify":
            ctx = verify.Context(rho=args.rho, c_shift=args.perturb_c)
            return cmd_verify(args.suite, ctx, args.out)
        if args.command == "compare":
            return cmd_compare(args.formula, args.oracle, args.t, tuple(args.window), args.tol, args.L)
        cfg = resolve_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "potential":
            return cmd_potential(cfg, args.kind)
        return cmd_oracle(cfg, args.u0, args.L, args.N, args.dt, args.T, args.lowpass, args.report)
    except ConfigError as e:
        return _fail("config", e, 2)
    except (kdv.SolutionSingularity, SingularDeterminantError, IllConditionedError,
            PoleError, pde_oracle.BlowUpError) as e:
        return _fail("numerical", e, 3)
    except (ValueError, OSError) as e:
        return _fail("config", e, 2)


if __name__ == "__main__":
    sys.exit(main())
