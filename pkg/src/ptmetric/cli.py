"""
Command-line scenario runner.

Every scenario writes one data file (CSV by default, or JSON) and a manifest
``<out stem>.manifest.json`` next to it. Config files are ``key = value``
lines; ``#`` starts a comment. Flags override config keys.

Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import operator
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .dynamics import (
    asymptotic_sp,
    bloch_grid_model,
    closed_form_snapshot,
    default_time_grid,
    numeric_trace,
)
from .errors import ConfigError, ParseError, PtMetricError, ValidationError
from .lindblad import DensityMatrix, compare_steady_state, integrate, model_lindblad_config
from .metric import MetricBuildOptions, SpectralRegime, classify_regime
from .model import (
    ModelParams,
    PreparedState,
    derive,
    eigen_overlap,
    hamiltonian,
    initial_state,
    phase_indicator,
)

SCHEMA_VERSION = 1
SCENARIOS = (
    "phase-diagram",
    "ur-grid",
    "time-trace",
    "sp-surface",
    "overlap-curve",
    "lindblad-compare",
    "single-point",
)
NEEDS_MODEL = {"ur-grid", "time-trace", "sp-surface", "lindblad-compare", "single-point"}

HEADERS = {
    "phase-diagram": ["theta", "s_over_r", "d", "regime"],
    "ur-grid": ["phi", "p", "ur"],
    "time-trace": ["t", "sx", "sy", "sz", "ur", "sp", "theta_s", "varphi_s"],
    "sp-surface:phi-p": ["phi", "p", "sp_inf"],
    "sp-surface:p-t": ["p", "t", "sp"],
    "overlap-curve": ["eta", "overlap"],
    "lindblad-compare": ["t", "sx_metric", "sy_metric", "sz_metric", "sx_lb", "sy_lb", "sz_lb"],
}

# (min, max, count) defaults per grid axis
GRID_DEFAULTS = {
    "theta": ("-pi", "pi", "200"),
    "sr": ("0.01", "2", "200"),
    "phi": ("-pi", "pi", "50"),
    "p": ("-3", "3", "50"),
    "t": ("0", None, "400"),
    "eta": ("0", "3", "301"),
}

KEYS = {
    "scenario", "eta", "s", "rho", "r", "theta", "p", "phi", "t", "zeta", "b", "tol",
    "sp_mode", "dt_max", "compare_t_min", "compare_tol", "out", "format", "threads",
}
for _ax in GRID_DEFAULTS:
    KEYS |= {f"{_ax}_min", f"{_ax}_max", f"{_ax}_n"}


# ---------------------------------------------------------------------------
# value parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_NAMES = {"pi": math.pi}
_FUNCS = {"sqrt": math.sqrt}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise ValueError("unsupported expression")


def parse_number(text: str) -> float:
    """
    Decimal number or a small expression over ``pi`` and ``sqrt``.

    ``"pi/2"`` evaluates to ``math.pi / 2`` exactly, so the model's trig
    snapping sees the same float as a literal ``math.pi / 2``.
    """
    text = text.strip()
    try:
        v = _eval(ast.parse(text, mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValueError(f"cannot parse number {text!r}") from exc
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def parse_complex(text: str) -> complex:
    t = text.strip().replace(" ", "")
    if t in ("i", "+i"):
        return 1j
    if t == "-i":
        return -1j
    try:
        return complex(t.replace("i", "j"))
    except ValueError as exc:
        raise ValueError(f"cannot parse complex number {text!r}") from exc


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    n: int

    def values(self):
        return np.linspace(self.lo, self.hi, self.n)


@dataclass
class ScenarioConfig:
    scenario: str
    model: ModelParams | None
    state: PreparedState
    grids: dict
    metric: MetricBuildOptions
    t: float = 0.0
    sp_mode: str = "phi-p"
    dt_max: float | None = None
    compare_t_min: float = 15.0
    compare_tol: float = 5e-2
    out: str | None = None
    fmt: str = "csv"
    threads: int = 1
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Plain-data view of the config (for the manifest)."""
        d = {"scenario": self.scenario}
        if self.model is not None:
            d["model"] = {"r": self.model.r, "s": self.model.s, "theta": self.model.theta}
        d["state"] = {"p": self.state.p, "phi": self.state.phi}
        d["grids"] = {k: [g.lo, g.hi, g.n] for k, g in sorted(self.grids.items())}
        z = self.metric.zeta
        d["metric"] = {"zeta": [z.real, z.imag], "b": self.metric.b, "tol": self.metric.tol}
        d["t"] = self.t
        d["sp_mode"] = self.sp_mode
        d["dt_max"] = self.dt_max
        d["compare_t_min"] = self.compare_t_min
        d["compare_tol"] = self.compare_tol
        d["format"] = self.fmt
        return d


def read_pairs(text: str) -> dict:
    """``key = value`` lines to an ordered dict; later keys win."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, value = (x.strip() for x in line.split("=", 1))
        if not key:
            raise ParseError("missing key", line=lineno)
        if key not in KEYS:
            raise ParseError("unknown key", line=lineno, key=key)
        pairs[key] = (value, lineno)
    return pairs


def _num(pairs, key, default=None):
    if key not in pairs:
        return default
    value, line = pairs[key]
    try:
        return parse_number(value)
    except ValueError as exc:
        raise ParseError(str(exc), line=line, key=key) from exc


def _int(pairs, key, default):
    v = _num(pairs, key, None)
    if v is None:
        return default
    if v != int(v):
        raise ParseError("expected an integer", line=pairs[key][1], key=key)
    return int(v)


def build_config(pairs: dict) -> ScenarioConfig:
    if "scenario" not in pairs or not pairs["scenario"][0]:
        raise ParseError("scenario is required", line=pairs.get("scenario", (None, None))[1], key="scenario")
    scenario, line = pairs["scenario"]
    if scenario not in SCENARIOS:
        raise ParseError(f"unknown scenario {scenario!r}", line=line, key="scenario")

    model = None
    by_eta = "eta" in pairs
    by_rt = "r" in pairs or "theta" in pairs
    if by_eta and by_rt:
        raise ValidationError("give either (eta, s, rho) or (r, s, theta), not both")
    s = _num(pairs, "s", 1.0)
    try:
        if by_eta:
            model = ModelParams.from_eta(_num(pairs, "eta"), s, _num(pairs, "rho", 0.0))
        elif by_rt:
            model = ModelParams(_num(pairs, "r", 0.0), s, _num(pairs, "theta", 0.0))
    except ValueError as exc:
        raise ValidationError(f"model: {exc}") from exc
    if "rho" in pairs and not by_eta:
        raise ValidationError("rho is only used together with eta")
    if model is None and scenario in NEEDS_MODEL:
        raise ValidationError(f"scenario {scenario} needs a model: eta (and s) or r, s, theta")

    try:
        state = PreparedState(_num(pairs, "p", 1.0), _num(pairs, "phi", math.pi))
    except ValueError as exc:
        raise ValidationError(f"state: {exc}") from exc

    grids = {}
    for ax, (lo, hi, n) in GRID_DEFAULTS.items():
        lo_v = _num(pairs, f"{ax}_min", parse_number(lo))
        if hi is None:
            hi_default = float(default_time_grid(model)[-1]) if model is not None else 10.0
        else:
            hi_default = parse_number(hi)
        hi_v = _num(pairs, f"{ax}_max", hi_default)
        n_v = _int(pairs, f"{ax}_n", int(n))
        if n_v < 2:
            raise ValidationError(f"{ax}_n must be at least 2")
        if not hi_v > lo_v:
            raise ValidationError(f"{ax}_max must exceed {ax}_min")
        grids[ax] = Grid(lo_v, hi_v, n_v)
    if grids["sr"].lo <= 0:
        raise ValidationError("sr_min must be positive (s = 0 is outside the model)")
    if grids["t"].lo < 0:
        raise ValidationError("t_min must be non-negative")

    zeta = 1j
    if "zeta" in pairs:
        try:
            zeta = parse_complex(pairs["zeta"][0])
        except ValueError as exc:
            raise ParseError(str(exc), line=pairs["zeta"][1], key="zeta") from exc
    b = _num(pairs, "b", None)
    if b is None:
        b = math.copysign(1.0, model.s) if model is not None else 1.0
    try:
        metric = MetricBuildOptions(zeta=zeta, b=b, tol=_num(pairs, "tol", None))
    except ValueError as exc:
        raise ValidationError(f"metric options: {exc}") from exc

    sp_mode = pairs.get("sp_mode", ("phi-p", None))[0]
    if sp_mode not in ("phi-p", "p-t"):
        raise ParseError("sp_mode must be phi-p or p-t", line=pairs["sp_mode"][1], key="sp_mode")
    fmt = pairs.get("format", ("csv", None))[0]
    if fmt not in ("csv", "json"):
        raise ParseError("format must be csv or json", line=pairs["format"][1], key="format")
    threads = _int(pairs, "threads", 1)
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    dt_max = _num(pairs, "dt_max", None)
    if dt_max is not None and not dt_max > 0:
        raise ValidationError("dt_max must be positive")
    compare_tol = _num(pairs, "compare_tol", 5e-2)
    if not compare_tol > 0:
        raise ValidationError("compare_tol must be positive")

    return ScenarioConfig(
        scenario=scenario,
        model=model,
        state=state,
        grids=grids,
        metric=metric,
        t=_num(pairs, "t", 0.0),
        sp_mode=sp_mode,
        dt_max=dt_max,
        compare_t_min=_num(pairs, "compare_t_min", 15.0),
        compare_tol=compare_tol,
        out=pairs.get("out", (None, None))[0],
        fmt=fmt,
        threads=threads,
        raw={k: v for k, (v, _) in pairs.items()},
    )


def parse_config(text: str) -> ScenarioConfig:
    return build_config(read_pairs(text))


# ---------------------------------------------------------------------------
# scenarios
#
# Each returns (columns, rows, regimes, extra) where regimes is a single tag
# or a list with one tag per row.


class PointFailure(Exception):
    pass


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _at(label, fn):
    try:
        return fn()
    except PtMetricError as exc:
        raise PointFailure(f"{label}: {type(exc).__name__}: {exc}") from exc


def _model_regime(cfg):
    return _at("model", lambda: classify_regime(hamiltonian(cfg.model))).value


def run_phase_diagram(cfg):
    thetas = cfg.grids["theta"].values()
    srs = cfg.grids["sr"].values()
    points = [(th, sr) for th in thetas for sr in srs]

    def one(pt):
        th, sr = pt
        mp = ModelParams(1.0, float(sr), float(th))
        reg = _at(f"theta={float(th)!r}, s/r={float(sr)!r}", lambda: classify_regime(hamiltonian(mp)))
        return [th, sr, phase_indicator(sr, th), reg.value]

    rows = _pmap(one, points, cfg.threads)
    return HEADERS["phase-diagram"], rows, [r[3] for r in rows], {}


def run_ur_grid(cfg):
    phis = cfg.grids["phi"].values()
    ps_ = cfg.grids["p"].values()
    states = [PreparedState(float(p), float(ph)) for ph in phis for p in ps_]
    out = _at(
        f"t={cfg.t!r}",
        lambda: bloch_grid_model(cfg.model, states, [cfg.t], opts=cfg.metric),
    )
    rows = [[st.phi, st.p, out[i, 0, 3]] for i, st in enumerate(states)]
    return HEADERS["ur-grid"], rows, _model_regime(cfg), {"t": cfg.t}


def _t_values(cfg):
    return cfg.grids["t"].values()


def run_time_trace(cfg):
    times = _t_values(cfg)
    tr = _at("trace", lambda: numeric_trace(cfg.model, cfg.state, times, opts=cfg.metric))
    rows = [
        [sn.t, sn.sx, sn.sy, sn.sz, sn.ur_gap, sn.sp, sn.theta_s, sn.varphi_s]
        for sn in tr.snapshots
    ]
    return HEADERS["time-trace"], rows, tr.regime.value, {}


def run_sp_surface(cfg):
    if cfg.sp_mode == "phi-p":
        phis = cfg.grids["phi"].values()
        ps_ = cfg.grids["p"].values()

        def one(pt):
            ph, p = pt
            st = PreparedState(float(p), float(ph))
            return [ph, p, _at(f"phi={float(ph)!r}, p={float(p)!r}", lambda: asymptotic_sp(cfg.model, st))]

        rows = _pmap(one, [(ph, p) for ph in phis for p in ps_], cfg.threads)
        return HEADERS["sp-surface:phi-p"], rows, _model_regime(cfg), {"mode": "phi-p"}
    ps_ = cfg.grids["p"].values()
    times = _t_values(cfg)
    states = [PreparedState(float(p), cfg.state.phi) for p in ps_]
    out = _at("grid", lambda: bloch_grid_model(cfg.model, states, times, opts=cfg.metric))
    rows = [[p, t, out[i, k, 4]] for i, p in enumerate(ps_) for k, t in enumerate(times)]
    return HEADERS["sp-surface:p-t"], rows, _model_regime(cfg), {"mode": "p-t", "phi": cfg.state.phi}


def run_overlap_curve(cfg):
    etas = cfg.grids["eta"].values()
    rows = [[e, eigen_overlap(float(e))] for e in etas]
    regimes = [derive(ModelParams.from_eta(float(e))).regime.value for e in etas]
    return HEADERS["overlap-curve"], rows, regimes, {}


def run_lindblad_compare(cfg):
    times = _t_values(cfg)
    mp, ps = cfg.model, cfg.state
    tr = _at("metric trace", lambda: numeric_trace(mp, ps, times, opts=cfg.metric))
    lcfg = model_lindblad_config(mp)
    rho0 = DensityMatrix.pure(initial_state(ps))
    lb = _at("lindblad", lambda: integrate(lcfg, rho0, times, cfg.dt_max))
    rows = [
        [sn.t, sn.sx, sn.sy, sn.sz, l[1], l[2], l[3]] for sn, l in zip(tr.snapshots, lb)
    ]
    extra = {"dt_max": cfg.dt_max if cfg.dt_max is not None else lcfg.default_dt()}
    if times[-1] >= cfg.compare_t_min:
        agree, dev = compare_steady_state(tr, lb, cfg.compare_t_min, cfg.compare_tol)
        extra["steady_state"] = {
            "t_min": cfg.compare_t_min,
            "tol": cfg.compare_tol,
            "agree": agree,
            "max_deviation": dev,
        }
    return HEADERS["lindblad-compare"], rows, tr.regime.value, extra


def run_single_point(cfg):
    mp, ps = cfg.model, cfg.state
    dp = derive(mp)
    regime = _model_regime(cfg)
    sn = numeric_trace(mp, ps, [cfg.t], opts=cfg.metric).snapshots[0]
    result = {
        "regime": regime,
        "derived": {"rho": dp.rho, "lambda": dp.lam, "eta": dp.eta, "d": dp.d},
        "t": cfg.t,
        "numeric": {
            "sx": sn.sx, "sy": sn.sy, "sz": sn.sz, "ur": sn.ur_gap, "sp": sn.sp,
            "theta_s": sn.theta_s, "varphi_s": sn.varphi_s,
        },
        "eigen_overlap": eigen_overlap(dp.eta),
    }
    try:
        cf = closed_form_snapshot(mp, ps, cfg.t)
        result["closed_form"] = {"sx": cf.sx, "sy": cf.sy, "sz": cf.sz, "ur": cf.ur_gap, "sp": cf.sp}
    except PtMetricError as exc:
        result["closed_form"] = {"error": f"{type(exc).__name__}: {exc}"}
    if dp.regime is SpectralRegime.UNBROKEN:
        result["asymptotic_sp"] = None
    else:
        result["asymptotic_sp"] = _at("asymptotic", lambda: asymptotic_sp(mp, ps))
    return result


RUNNERS = {
    "phase-diagram": run_phase_diagram,
    "ur-grid": run_ur_grid,
    "time-trace": run_time_trace,
    "sp-surface": run_sp_surface,
    "overlap-curve": run_overlap_curve,
    "lindblad-compare": run_lindblad_compare,
}


# ---------------------------------------------------------------------------
# output


def fmt_float(x) -> str:
    return format(float(x), ".17g")


def _cell(v):
    return v if isinstance(v, str) else fmt_float(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_cell(v) for v in r) + "\n")


def write_json(path: Path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def run(cfg: ScenarioConfig) -> Path:
    """Execute a scenario and write its data and manifest; returns the data path."""
    _kernels.set_threads(cfg.threads)
    single = cfg.scenario == "single-point"
    ext = "json" if single or cfg.fmt == "json" else "csv"
    out = Path(cfg.out) if cfg.out else Path(f"{cfg.scenario}.{ext}")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "library": "ptmetric",
        "version": __version__,
        "backend": _kernels.backend(),
        "config": cfg.resolved(),
    }
    if single:
        result = run_single_point(cfg)
        write_json(out, {k: _jsonable(v) for k, v in result.items()})
        manifest["regimes"] = result["regime"]
        manifest["columns"] = None
    else:
        columns, rows, regimes, extra = RUNNERS[cfg.scenario](cfg)
        rows = [[_jsonable(v) for v in r] for r in rows]
        if cfg.fmt == "csv":
            write_csv(out, columns, rows)
        else:
            write_json(out, {"columns": columns, "rows": rows})
        manifest["columns"] = columns
        manifest["rows"] = len(rows)
        manifest["regimes"] = regimes
        manifest.update(extra)
    write_json(manifest_path(out), manifest)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ptmetric",
        description="Metric-consistent dynamics of the PT-symmetric two-level model.",
    )
    sub = ap.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--out", help="output data path")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--threads", type=int)
        sp.add_argument("--tol", help="metric pairing tolerance")
        for key in ("eta", "s", "rho", "r", "theta", "p", "phi", "t"):
            sp.add_argument(f"--{key}")
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        pairs = read_pairs(text)
        if "scenario" in pairs and pairs["scenario"][0] != args.scenario:
            raise ValidationError(
                f"config scenario {pairs['scenario'][0]!r} does not match subcommand {args.scenario!r}"
            )
        pairs["scenario"] = (args.scenario, None)
        for key in ("eta", "s", "rho", "r", "theta", "p", "phi", "t", "tol", "out", "format", "threads"):
            v = getattr(args, key)
            if v is not None:
                pairs[key] = (str(v), None)
        for item in args.set:
            if "=" not in item:
                raise ParseError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = (x.strip() for x in item.split("=", 1))
            if k not in KEYS:
                raise ParseError("unknown key", key=k)
            pairs[k] = (v, None)
        cfg = build_config(pairs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        out = run(cfg)
    except PointFailure as exc:
        print(f"numerical error at {exc}", file=sys.stderr)
        return 2
    except PtMetricError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
