"""Entropy numerics for bosonic Gaussian channels on photon-number distributions.

Every command prints one report, JSON by default or CSV with ``--format
csv``.  A report carries the resolved configuration and the package
version and nothing time-dependent, so identical configurations give
byte-identical output.

Exit codes: 0 success, 1 usage or configuration error, 2 a numerical
budget was exceeded (truncation, integrator noise, scan budget).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .channel import (
    DIVERGENT,
    Additive,
    Amplifier,
    ChannelParams,
    LindbladSpec,
    Loss,
    entropy_derivative_at_zero,
    entropy_derivative_fd,
    evolve,
    lindblad_from_kind,
    lindblad_from_params,
    output_entropy,
    params_from_lindblad,
    thermal_output_nbar,
)
from .contravariant import (
    ContravariantParams,
    decompose,
    decomposition_residual,
    min_output_entropy_contravariant,
    verify_contravariant,
)
from .critical import find_critical_points
from .errors import NumericalError, ScanBudgetExhausted, TruncationError
from .fock import (
    FockDistribution,
    entropy_budget,
    g,
    g_inverse,
    shannon_entropy,
    thermal_distribution,
)
from .verify import (
    check_discretization,
    check_finite_support_divergence,
    check_passive_reduction,
    local_search_min_entropy,
    verify_conjecture_finite,
    verify_conjecture_infinitesimal,
)

LN2 = math.log(2.0)
# keys never echoed: they do not change the numbers
_NOT_ECHOED = {"config", "output", "command"}

DEFAULTS = {
    "dim": 256,
    "N": 0.0,
    "engine": "auto",
    "format": "json",
    "bits": False,
    "trials": 200,
    "mode": "finite",
    "n_max": 2000,
    "grid_mu": 400,
    "grid_z0": 400,
    "steps": 10,
    "iterations": 400,
    "init": "random",
    "gradient": "fd",
    "support_N": 0,
    "fd": False,
}
PER_COMMAND_DEFAULTS = {
    ("verify", "passive"): {"dim": 16},
    ("verify", "local-search"): {"dim": 64},
    ("verify", "divergence"): {"dim": None},
    ("contravariant", None): {"trials": 0},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- argument plumbing ----------------------------------------------------


def _add_channel(p, ranges=False):
    num = str if ranges else float
    grp = p.add_argument_group("channel")
    grp.add_argument("--kind", choices=["loss", "amplifier", "additive"])
    grp.add_argument("--eta", type=num, help="transmissivity of a loss channel")
    grp.add_argument("--kappa", type=num, help="gain of an amplifier")
    grp.add_argument("--N", type=num, help="thermal noise (default 0)")
    grp.add_argument("--gamma-plus", dest="gamma_plus", type=num)
    grp.add_argument("--gamma-minus", dest="gamma_minus", type=num)
    grp.add_argument("--t", type=num, help="evolution time for raw rates")
    grp.add_argument("--tau", type=float)
    grp.add_argument("--y", type=float)


def _add_state(p):
    grp = p.add_argument_group("input state")
    grp.add_argument("--thermal", type=float, metavar="NBAR", help="thermal input with this mean photon number")
    grp.add_argument("--state", help="delta<k> (Fock state) or uniform<N> (flat on 0..N)")
    grp.add_argument("--probs", help="comma-separated probabilities")


def _add_entropy(p):
    grp = p.add_argument_group("input entropy")
    grp.add_argument("--S0", dest="S0", type=float, help="input entropy in nats")
    grp.add_argument("--S0-nbar", dest="S0_nbar", type=float, help="input entropy given as g(NBAR)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bosonic-moe", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--bits", action="store_const", const=True, help="display entropies in bits")
    common.add_argument("--dim", type=int, help="Fock cutoff")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("entropy", parents=[common], help="Shannon entropy of a photon distribution")
    _add_state(p)

    p = sub.add_parser("thermal", parents=[common], help="thermal state, g and g^-1")
    p.add_argument("--nbar", type=float)
    _add_entropy(p)

    p = sub.add_parser("evolve", parents=[common], help="evolve a distribution through a channel")
    _add_channel(p)
    _add_state(p)
    p.add_argument("--engine", choices=["auto", "expm", "rk"])

    p = sub.add_parser("derivative", parents=[common], help="initial output-entropy rate")
    _add_channel(p)
    _add_state(p)
    p.add_argument("--fd", action="store_const", const=True, help="also report a finite-difference estimate")

    p = sub.add_parser("critical", parents=[common], help="critical points of the entropy-rate problem")
    _add_channel(p)
    _add_entropy(p)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--grid-mu", dest="grid_mu", type=int)
    p.add_argument("--grid-z0", dest="grid_z0", type=int)

    p = sub.add_parser("verify", parents=[common], help="Monte-Carlo and oracle checks")
    p.add_argument(
        "--mode",
        choices=["finite", "infinitesimal", "passive", "divergence", "discretization", "local-search"],
    )
    _add_channel(p)
    _add_entropy(p)
    _add_state(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--support", type=int, help="levels carrying the random dense states (passive mode)")
    p.add_argument("--support-N", dest="support_N", type=int)
    p.add_argument("--dt-grid", dest="dt_grid", help="comma-separated time steps (divergence mode)")
    p.add_argument("--steps", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--init", choices=["random", "thermal"])
    p.add_argument("--gradient", choices=["fd", "adjoint"])

    p = sub.add_parser("sweep", parents=[common], help="min-gap curve over a channel-parameter range")
    _add_channel(p, ranges=True)
    _add_entropy(p)
    p.add_argument("--mode", choices=["finite", "infinitesimal"])
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("contravariant", parents=[common], help="phase-conjugating channel")
    p.add_argument("--tau", type=float)
    p.add_argument("--y", type=float)
    _add_entropy(p)
    p.add_argument("--trials", type=int, help="Monte-Carlo trials (0 = none)")
    p.add_argument("--seed", type=int)
    return parser


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path!r}: {exc.strerror}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(parser_action, raw):
    if parser_action is None:
        return raw
    if parser_action.const is True and parser_action.nargs == 0:
        return raw.lower() in {"1", "true", "yes", "on"}
    conv = parser_action.type or str
    try:
        val = conv(raw)
    except (TypeError, ValueError):
        raise UsageError(f"config value {raw!r} is not valid for {parser_action.dest}") from None
    if parser_action.choices is not None and val not in parser_action.choices:
        raise UsageError(f"config value {raw!r} not one of {sorted(parser_action.choices)}")
    return val


def resolve_config(parser, argv) -> dict:
    """Flags over config-file keys over defaults."""
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    cfg = {k: v for k, v in vars(args).items()}
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in actions or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for command {args.command}")
            if cfg.get(key) is None:
                cfg[key] = _convert(actions[key], raw)
    mode = cfg.get("mode") or DEFAULTS.get("mode") if args.command in ("verify", "sweep") else None
    defaults = dict(DEFAULTS)
    defaults.update(PER_COMMAND_DEFAULTS.get((args.command, mode), {}))
    for key in actions:
        if cfg.get(key) is None and key in defaults:
            cfg[key] = defaults[key]
    return cfg


# -- builders -------------------------------------------------------------


def build_spec(cfg) -> LindbladSpec:
    raw = [cfg.get(k) for k in ("gamma_plus", "gamma_minus", "t")]
    if any(v is not None for v in raw):
        if any(v is None for v in raw):
            raise UsageError("raw rates need all of --gamma-plus, --gamma-minus and --t")
        return LindbladSpec(*map(float, raw))
    if cfg.get("tau") is not None or cfg.get("y") is not None:
        if cfg.get("tau") is None or cfg.get("y") is None:
            raise UsageError("--tau and --y go together")
        return lindblad_from_params(ChannelParams(cfg["tau"], cfg["y"]))
    kind = cfg.get("kind")
    N = float(cfg.get("N") or 0.0)
    if kind == "loss":
        if cfg.get("eta") is None:
            raise UsageError("--kind loss needs --eta")
        return lindblad_from_kind(Loss(float(cfg["eta"]), N))
    if kind == "amplifier":
        if cfg.get("kappa") is None:
            raise UsageError("--kind amplifier needs --kappa")
        return lindblad_from_kind(Amplifier(float(cfg["kappa"]), N))
    if kind == "additive":
        return lindblad_from_kind(Additive(N))
    raise UsageError("specify a channel: --kind with its parameters, --tau/--y, or raw rates")


def build_state(cfg, dim) -> FockDistribution:
    given = [k for k in ("thermal", "state", "probs") if cfg.get(k) is not None]
    if len(given) != 1:
        raise UsageError("give exactly one of --thermal, --state, --probs")
    if cfg.get("thermal") is not None:
        return thermal_distribution(cfg["thermal"], dim)
    if cfg.get("probs") is not None:
        try:
            v = np.array([float(x) for x in cfg["probs"].split(",")])
        except ValueError:
            raise UsageError("--probs must be comma-separated numbers") from None
        if v.size > dim:
            raise UsageError("--probs longer than --dim")
        try:
            return FockDistribution(np.pad(v, (0, dim - v.size)))
        except ValueError as exc:
            raise UsageError(f"--probs: {exc}") from None
    s = cfg["state"].strip().lower()
    for prefix in ("delta", "uniform"):
        if s.startswith(prefix):
            try:
                k = int(s[len(prefix):] or 0)
            except ValueError:
                break
            if not 0 <= k < dim:
                raise UsageError(f"--state {s}: level outside the window of {dim}")
            p = np.zeros(dim)
            if prefix == "delta":
                p[k] = 1.0
            else:
                p[: k + 1] = 1.0 / (k + 1)
            return FockDistribution(p)
    raise UsageError(f"unknown --state {cfg['state']!r}; use delta<k> or uniform<N>")


def resolve_S0(cfg, required=True):
    S0, nb = cfg.get("S0"), cfg.get("S0_nbar")
    if S0 is not None and nb is not None:
        raise UsageError("give --S0 or --S0-nbar, not both")
    if nb is not None:
        if nb < 0:
            raise UsageError("--S0-nbar must be >= 0")
        return g(nb)
    if S0 is None and required:
        raise UsageError("an input entropy is required (--S0 or --S0-nbar)")
    if S0 is not None and S0 < 0:
        raise UsageError("--S0 must be >= 0")
    return S0


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` with ``stop`` included when it lies on the grid."""
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise UsageError(f"range {text!r} must be start:stop:step")
    a, b, c = map(float, parts)
    if c <= 0 or b < a:
        raise UsageError(f"range {text!r} needs step > 0 and stop >= start")
    n = int(math.floor((b - a) / c + 1e-9)) + 1
    return [round(a + i * c, 12) for i in range(n)]


def _need_seed(cfg):
    if cfg.get("seed") is None:
        raise UsageError(f"{cfg['command']} is stochastic: --seed is required")


# -- commands -------------------------------------------------------------
# Each returns (result dict, csv columns, csv rows).


def cmd_entropy(cfg):
    p = build_state(cfg, cfg["dim"])
    S = shannon_entropy(p)
    res = {"entropy": S, "entropy_budget": entropy_budget(p.tail_bound, p.dim), "tail_bound": p.tail_bound}
    return res, ["entropy", "entropy_budget", "tail_bound"], [[S, res["entropy_budget"], p.tail_bound]]


def cmd_thermal(cfg):
    nb = cfg.get("nbar")
    S0 = resolve_S0(cfg, required=nb is None)
    if nb is not None and S0 is not None:
        raise UsageError("give --nbar or an entropy, not both")
    if nb is None:
        nb = g_inverse(S0)
    p = thermal_distribution(nb, cfg["dim"])
    res = {"nbar": nb, "entropy": g(nb), "tail_bound": p.tail_bound, "probs": p.probs.tolist()}
    rows = [[n, v] for n, v in enumerate(p.probs.tolist())]
    return res, ["n", "p_n"], rows


def cmd_evolve(cfg):
    spec = build_spec(cfg)
    p = build_state(cfg, cfg["dim"])
    out = evolve(spec, p, engine=cfg["engine"])
    S = shannon_entropy(out)
    res = {
        "channel": _spec_dict(spec),
        "probs": out.probs.tolist(),
        "tail_bound": out.tail_bound,
        "entropy": S,
        "entropy_budget": entropy_budget(out.tail_bound, out.dim),
        "mean_photon_number": out.mean_photon_number(),
    }
    rows = [[n, v] for n, v in enumerate(out.probs.tolist())]
    return res, ["n", "p_n"], rows


def cmd_derivative(cfg):
    spec = build_spec(cfg)
    p = build_state(cfg, cfg["dim"])
    rate = entropy_derivative_at_zero(spec, p)
    divergent = rate == DIVERGENT
    res = {"channel": _spec_dict(spec), "divergent": divergent, "rate": "DIVERGENT" if divergent else rate}
    cols = ["rate", "divergent"]
    row = [res["rate"], divergent]
    if cfg.get("fd") and not divergent:
        fd = entropy_derivative_fd(spec, p)
        res["rate_fd"] = fd
        cols.append("rate_fd")
        row.append(fd)
    return res, cols, [row]


CRITICAL_COLUMNS = [
    "branch",
    "mu",
    "z0",
    "entropy",
    "entropy_rate",
    "entropy_rate_gap",
    "output_entropy",
    "output_entropy_gap",
    "stationarity_residual",
    "n_ratios",
    "ratios_first50",
]


def cmd_critical(cfg):
    spec = build_spec(cfg)
    S0 = resolve_S0(cfg)
    dim = cfg["dim"]
    points, scan = find_critical_points(
        spec.gamma_plus,
        spec.gamma_minus,
        S0,
        n_max=cfg["n_max"],
        grid=(cfg["grid_mu"], cfg["grid_z0"]),
        return_scan=True,
    )
    geo = points[0]
    thermal_out = output_entropy(spec, thermal_distribution(g_inverse(S0), dim)).value
    rows, recs = [], []
    for pt in points:
        probs = pt.distribution.probs
        if probs.size < dim:
            probs = np.pad(probs, (0, dim - probs.size))
        else:
            probs = probs[:dim]
        S_out = output_entropy(spec, FockDistribution(probs, pt.distribution.tail_bound)).value
        ratios = pt.ratios.z[:50].tolist()
        rec = {
            "branch": pt.branch,
            "mu": pt.mu,
            "z0": pt.z0,
            "entropy": pt.entropy,
            "entropy_rate": pt.entropy_rate,
            "entropy_rate_gap": pt.entropy_rate - geo.entropy_rate,
            "output_entropy": S_out,
            "output_entropy_gap": S_out - thermal_out,
            "stationarity_residual": pt.stationarity_residual,
            "n_ratios": int(pt.ratios.log_z.size),
            "ratios_first50": ratios,
        }
        recs.append(rec)
        rows.append([rec[c] if c != "ratios_first50" else ";".join(repr(float(r)) for r in ratios) for c in CRITICAL_COLUMNS])
    res = {
        "channel": _spec_dict(spec),
        "S0": S0,
        "points": recs,
        "scan": {
            "evaluations": scan.evaluations,
            "grid_shape": list(scan.grid_shape),
            "surviving_cells": scan.surviving_cells,
            "dropped_brackets": scan.dropped_brackets,
        },
        "thermal_output_entropy": thermal_out,
    }
    return res, CRITICAL_COLUMNS, rows


REPORT_COLUMNS = [
    "check",
    "status",
    "trials",
    "violations",
    "min_gap",
    "argmin_seed",
    "entropy_error_budget",
    "excluded",
    "divergent",
    "thermal_self_gap",
    "baseline_closed_form",
    "baseline_evolved",
]


def _report(rep):
    d = rep.to_dict()
    return d, REPORT_COLUMNS, [[d[c] for c in REPORT_COLUMNS]]


def cmd_verify(cfg):
    mode = cfg["mode"]
    spec = build_spec(cfg)
    if mode in ("finite", "infinitesimal", "passive", "local-search"):
        _need_seed(cfg)
    if mode == "finite":
        return _report(verify_conjecture_finite(spec, resolve_S0(cfg), cfg["trials"], cfg["seed"], dim=cfg["dim"]))
    if mode == "infinitesimal":
        return _report(verify_conjecture_infinitesimal(spec, resolve_S0(cfg), cfg["trials"], cfg["seed"], dim=cfg["dim"]))
    if mode == "passive":
        return _report(check_passive_reduction(spec, cfg["dim"], cfg["trials"], cfg["seed"], support=cfg.get("support")))
    if mode == "local-search":
        S0 = resolve_S0(cfg)
        r = local_search_min_entropy(
            spec, S0, cfg["dim"], cfg["iterations"], cfg["seed"], init=cfg["init"], gradient=cfg["gradient"]
        )
        res = {
            "channel": _spec_dict(spec),
            "S0": S0,
            "output_entropy": r.output_entropy,
            "baseline": r.baseline,
            "baseline_closed_form": r.baseline_closed_form,
            "gap": r.gap,
            "iterations": r.iterations,
            "converged": r.converged,
            "probs": r.distribution.probs.tolist(),
        }
        cols = ["output_entropy", "baseline", "baseline_closed_form", "gap", "iterations", "converged"]
        return res, cols, [[res[c] for c in cols]]
    if mode == "divergence":
        N = cfg["support_N"]
        grid = None
        if cfg.get("dt_grid"):
            try:
                grid = [float(x) for x in cfg["dt_grid"].split(",")]
            except ValueError:
                raise UsageError("--dt-grid must be comma-separated numbers") from None
        dim = cfg.get("dim")
        p = None
        if any(cfg.get(k) is not None for k in ("thermal", "state", "probs")):
            p = build_state(cfg, dim or N + 40)
        tab = check_finite_support_divergence(spec, N, grid, p=p, dim=dim)
        res = {
            "channel": _spec_dict(spec),
            "support_N": N,
            "dt": list(tab.dt),
            "increment": list(tab.increment),
            "quotient": list(tab.quotient),
            "leading_term": list(tab.leading_term),
            "strictly_increasing": tab.strictly_increasing,
            "leading_ratio": tab.leading_ratio,
        }
        return res, ["dt", "increment", "quotient", "leading_term"], [list(r) for r in tab.rows]
    if mode == "discretization":
        tab = check_discretization(spec, resolve_S0(cfg), cfg["steps"], dim=cfg["dim"])
        rows = list(zip(range(1, tab.steps + 1), tab.time, tab.nbar, tab.entropy, tab.closed_form, tab.composition_tv))
        res = {
            "channel": _spec_dict(spec),
            "steps": tab.steps,
            "rows": [list(r) for r in rows],
            "max_entropy_error": tab.max_entropy_error,
            "max_composition_tv": tab.max_composition_tv,
        }
        return res, ["step", "time", "nbar", "entropy", "closed_form", "composition_tv"], [list(r) for r in rows]
    raise UsageError(f"unknown mode {mode!r}")


SWEEP_COLUMNS = [
    "parameter",
    "value",
    "nbar_out",
    "baseline_closed_form",
    "baseline_evolved",
    "min_gap",
    "violations",
    "excluded",
    "status",
]


def cmd_sweep(cfg):
    _need_seed(cfg)
    S0 = resolve_S0(cfg)
    keys = [k for k in ("eta", "kappa", "N", "gamma_plus", "gamma_minus", "t") if cfg.get(k) is not None]
    ranges = {k: parse_range(str(cfg[k])) for k in keys}
    swept = [k for k, v in ranges.items() if ":" in str(cfg[k])]
    if len(swept) != 1:
        raise UsageError("sweep needs exactly one parameter given as start:stop:step")
    name = swept[0]
    rows, recs = [], []
    for v in ranges[name]:
        local = dict(cfg)
        for k in keys:
            local[k] = ranges[k][0] if k != name else v
        spec = build_spec(local)
        if cfg["mode"] == "finite":
            rep = verify_conjecture_finite(spec, S0, cfg["trials"], cfg["seed"], dim=cfg["dim"])
        else:
            rep = verify_conjecture_infinitesimal(spec, S0, cfg["trials"], cfg["seed"], dim=cfg["dim"])
        nb = thermal_output_nbar(params_from_lindblad(spec), g_inverse(S0))
        rec = {
            "parameter": name,
            "value": v,
            "nbar_out": nb,
            "baseline_closed_form": rep.baseline_closed_form,
            "baseline_evolved": rep.baseline_evolved,
            "min_gap": rep.min_gap,
            "violations": rep.violations,
            "excluded": rep.excluded,
            "status": rep.status,
        }
        recs.append(rec)
        rows.append([rec[c] for c in SWEEP_COLUMNS])
    return {"S0": S0, "mode": cfg["mode"], "rows": recs}, SWEEP_COLUMNS, rows


def cmd_contravariant(cfg):
    if cfg.get("tau") is None or cfg.get("y") is None:
        raise UsageError("contravariant needs --tau and --y")
    params = ContravariantParams(cfg["tau"], cfg["y"])
    S0 = resolve_S0(cfg)
    dec = decompose(params)
    tau_r, y_r = dec.recompose()
    res = {
        "tau": params.tau,
        "y": params.y,
        "eta": dec.eta,
        "kappa": dec.kappa,
        "recomposed_tau": tau_r,
        "recomposed_y": y_r,
        "recomposition_residual": decomposition_residual(params, dec),
        "min_output_entropy": min_output_entropy_contravariant(params, S0),
        "S0": S0,
    }
    cols = ["eta", "kappa", "recomposed_tau", "recomposed_y", "recomposition_residual", "min_output_entropy"]
    if cfg["trials"]:
        _need_seed(cfg)
        if S0 <= 0:
            raise UsageError("the Monte-Carlo check needs S0 > 0")
        rep = verify_contravariant(params, S0, cfg["trials"], cfg["seed"], dim=cfg["dim"])
        res["monte_carlo"] = rep.to_dict()
        res["monte_carlo_min"] = rep.min_gap + res["min_output_entropy"]
        cols += ["monte_carlo_min", "violations"]
        res["violations"] = rep.violations
    return res, cols, [[res[c] for c in cols]]


COMMANDS = {
    "entropy": cmd_entropy,
    "thermal": cmd_thermal,
    "evolve": cmd_evolve,
    "derivative": cmd_derivative,
    "critical": cmd_critical,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "contravariant": cmd_contravariant,
}

ENTROPY_KEYS = {
    "entropy",
    "entropy_budget",
    "min_output_entropy",
    "output_entropy",
    "output_entropy_gap",
    "thermal_output_entropy",
    "min_gap",
    "baseline_closed_form",
    "baseline_evolved",
    "baseline",
    "gap",
    "entropy_error_budget",
    "thermal_self_gap",
    "monte_carlo_min",
    "closed_form",
    "max_entropy_error",
    "S0",
    "entropy_rate",
    "entropy_rate_gap",
    "rate",
    "rate_fd",
}


# -- output ---------------------------------------------------------------


def _spec_dict(spec):
    return {"gamma_plus": spec.gamma_plus, "gamma_minus": spec.gamma_minus, "t": spec.t}


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return v


def _to_bits(d, cols=None, rows=None):
    if isinstance(d, dict):
        return {k: (_scale(x) if k in ENTROPY_KEYS else _to_bits(x)) for k, x in d.items()}
    if isinstance(d, list):
        return [_to_bits(x) for x in d]
    return d


def _scale(x):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return x / LN2
    if isinstance(x, list):
        return [_scale(v) for v in x]
    return x


def _fmt(v):
    v = _clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def render(command, cfg, result, columns, rows) -> str:
    echo = {k: v for k, v in sorted(cfg.items()) if k not in _NOT_ECHOED}
    units = "bits" if cfg.get("bits") else "nats"
    if cfg.get("bits"):
        result = _to_bits(result)
        idx = [i for i, c in enumerate(columns) if c in ENTROPY_KEYS]
        rows = [[(_scale(r[i]) if i in idx else r[i]) for i in range(len(r))] for r in rows]
    if cfg["format"] == "json":
        doc = {"command": command, "version": __version__, "units": units, "config": echo, "result": result}
        return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# command: {command}\n")
    buf.write(f"# version: {__version__}\n")
    buf.write(f"# units: {units}\n")
    buf.write("# config: " + json.dumps(_clean(echo), sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        cfg = resolve_config(parser, argv)
        result, columns, rows = COMMANDS[cfg["command"]](cfg)
        text = render(cfg["command"], cfg, result, columns, rows)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TruncationError, NumericalError, ScanBudgetExhausted) as exc:
        print(f"numerical budget exceeded: {exc}", file=sys.stderr)
        return 2
    if cfg.get("output"):
        with open(cfg["output"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
