"""Command-line front end: ``hdkde {phase,kl-curve,simulate,rem}``.

Every run writes its tables plus ``manifest.json`` into ``--out``. A
manifest is itself a valid ``--config`` and reproduces the run.

Exit codes: 0 success, 1 usage or schema error, 2 solver failure,
3 resource cap.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from . import __version__
from .errors import (BracketError, ConvergenceError, DomainError, HdkdeError,
                     ResourceCapError, SchemaError)
from .io import write_csv, write_json
from .kernels import GammaKernel
from .spectral import SpectralDensity

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_CAP = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration schema

@dataclass(frozen=True)
class Field:
    kind: str  # "float", "int", "bool", "str", "floats"
    default: Any = None
    required: bool = False
    check: Optional[Callable[[Any], Optional[str]]] = None


def _positive(v):
    return None if v > 0 else "must be positive"


def _at_least(lo):
    return lambda v: None if v >= lo else f"must be >= {lo}"


def _nonempty_positive(v):
    if not v:
        return "must be a non-empty list"
    return None if all(x > 0 for x in v) else "entries must be positive"


def _gammas(v):
    if not v:
        return "must be a non-empty list"
    return None if all(x >= 1 for x in v) else "entries must be >= 1"


def _choice(*opts):
    return lambda v: None if v in opts else f"must be one of {', '.join(opts)}"


COMMON = {
    "schema_version": Field("int", SCHEMA_VERSION),
    "seed": Field("int", 0, check=_at_least(0)),
    "threads": Field("int", 1, check=_at_least(1)),
    "spectrum": Field("str", None),
}

SCHEMAS: dict[str, dict[str, Field]] = {
    "phase": {
        "alphas": Field("floats", required=True, check=_nonempty_positive),
        "gamma": Field("float", 1.0, check=_at_least(1.0)),
        "include_h_opt": Field("bool", True),
    },
    "kl-curve": {
        "alpha": Field("float", required=True, check=_positive),
        "h_grid": Field("floats", required=True, check=_nonempty_positive),
        "gammas": Field("floats", [1.0], check=_gammas),
    },
    "rem": {
        "alpha": Field("float", required=True, check=_positive),
        "d": Field("int", 100, check=_at_least(1)),
        "beta": Field("float", 1.0, check=_positive),
        "trials": Field("int", 1000, check=_at_least(1)),
        "method": Field("str", "auto", check=_choice("auto", "direct", "extreme")),
        "k_exact": Field("int", 1024, check=_at_least(1)),
        "n_cap": Field("int", 2 ** 26, check=_at_least(1)),
    },
}

_SIM_BASE = {
    "mode": Field("str", required=True,
                  check=_choice("fluctuations", "empirical-kl", "dmin", "rem")),
    "d": Field("int", required=True, check=_at_least(1)),
    "n": Field("int", required=True, check=_at_least(1)),
    "h": Field("float", required=True, check=_positive),
    "gamma": Field("float", 1.0, check=_at_least(1.0)),
    "num_datasets": Field("int", 1, check=_at_least(1)),
    "num_queries": Field("int", 1, check=_at_least(1)),
}
SIM_MODES = {
    "fluctuations": {"bins": Field("int", 80, check=_at_least(1)),
                     "x_index": Field("int", 0, check=_at_least(0))},
    "dmin": {"bins": Field("int", 80, check=_at_least(1)),
             "x_index": Field("int", 0, check=_at_least(0))},
    "empirical-kl": {"h_grid": Field("floats", None, check=_nonempty_positive),
                     "gammas": Field("floats", None, check=_gammas),
                     "normalize": Field("bool", True)},
}


def _coerce(name: str, f: Field, value, problems: list[str]):
    try:
        if f.kind == "float":
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
        elif f.kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            out = int(value)
        elif f.kind == "bool":
            if not isinstance(value, bool):
                raise TypeError
            out = value
        elif f.kind == "str":
            if not isinstance(value, str):
                raise TypeError
            out = value
        elif f.kind == "floats":
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                raise TypeError
            out = [float(x) for x in value]
        else:  # pragma: no cover
            raise TypeError
    except (TypeError, ValueError):
        problems.append(f"{name}: expected {f.kind}, got {value!r}")
        return None
    if f.check is not None:
        msg = f.check(out)
        if msg:
            problems.append(f"{name}: {msg} (got {value!r})")
    return out


def schema_for(command: str, raw: dict) -> dict[str, Field]:
    if command == "simulate":
        mode = raw.get("mode")
        if mode == "rem":
            schema = {"mode": _SIM_BASE["mode"], **SCHEMAS["rem"]}
        else:
            schema = {**_SIM_BASE, **SIM_MODES.get(mode, {})}
    else:
        schema = dict(SCHEMAS[command])
    return {**COMMON, **schema}


def validate(command: str, raw: dict) -> dict:
    """Resolve defaults and check every field; all problems are reported together."""
    if not isinstance(raw, dict):
        raise SchemaError(["configuration must be a JSON object"])
    schema = schema_for(command, raw)
    problems = [f"{k}: unknown key" for k in sorted(raw) if k not in schema]
    out = {}
    for name, f in schema.items():
        if name in raw and raw[name] is not None:
            out[name] = _coerce(name, f, raw[name], problems)
        elif f.required:
            problems.append(f"{name}: required")
        else:
            out[name] = f.default
    if out.get("schema_version") not in (None, SCHEMA_VERSION) and "schema_version" in raw:
        problems.append(f"schema_version: unsupported version {raw['schema_version']!r}")
    if problems:
        raise SchemaError(problems)
    return out


def load_config(path: Optional[str], command: str) -> dict:
    """Read a JSON config, or the ``config`` block of a manifest."""
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SchemaError([f"config: cannot read {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise SchemaError([f"config: invalid JSON in {path}: {exc}"]) from None
    if isinstance(doc, dict) and "manifest_version" in doc:
        if doc.get("command") != command:
            raise SchemaError([f"command: manifest is for {doc.get('command')!r}, not {command!r}"])
        return dict(doc["config"])
    return doc


def _load_spectrum(cfg: dict) -> SpectralDensity:
    if cfg.get("spectrum"):
        return SpectralDensity.load(cfg["spectrum"])
    return SpectralDensity.identity()


def _metadata(command: str, cfg: dict) -> dict:
    return {"command": command, "config": cfg, "seed": cfg["seed"], "version": __version__}


def _manifest(out_dir: Path, command: str, cfg: dict, outputs: list[Path]) -> Path:
    return write_json(out_dir / "manifest.json", {
        "manifest_version": 1,
        "command": command,
        "config": cfg,
        "seed": cfg["seed"],
        "outputs": [p.name for p in outputs],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    })


# ---------------------------------------------------------------------------
# commands

def run_phase(cfg: dict, out_dir: Path) -> list[Path]:
    from .phase_diagram import sweep

    kernel, spectrum = GammaKernel(cfg["gamma"]), _load_spectrum(cfg)
    rows = []
    for a in cfg["alphas"]:
        try:
            rows.extend(sweep([a], kernel, spectrum, cfg["include_h_opt"]))
        except BracketError as exc:
            raise BracketError(f"alpha={a!r}: {exc}", exc.interval) from exc
        except ConvergenceError as exc:
            raise ConvergenceError(f"alpha={a!r}: {exc}", exc.residual, exc.iterations) from exc
    cols = ["alpha", "h_clt", "h_g"] + (["h_opt"] if cfg["include_h_opt"] else [])
    cols += ["h_clt_sq", "h_g_sq"] + (["h_opt_sq"] if cfg["include_h_opt"] else [])
    return [write_csv(out_dir / "phase.csv", [r.as_dict() for r in rows], cols,
                      _metadata("phase", cfg))]


def run_kl_curve(cfg: dict, out_dir: Path) -> list[Path]:
    from .kl import kl_curve
    from .phase_diagram import h_g

    spectrum = _load_spectrum(cfg)
    rows = []
    for g in cfg["gammas"]:
        kernel = GammaKernel(g)
        hg = h_g(cfg["alpha"], kernel, spectrum)
        for p in kl_curve(cfg["alpha"], cfg["h_grid"], kernel, spectrum):
            rows.append({"gamma": g, "h": p.h, "dkl_per_d": p.dkl_per_d, "phase": p.phase,
                         "m_used": p.m_used, "h_g": hg})
    return [write_csv(out_dir / "kl_curve.csv", rows,
                      ["gamma", "h", "dkl_per_d", "phase", "m_used", "h_g"],
                      _metadata("kl-curve", cfg))]


def run_rem(cfg: dict, out_dir: Path, command: str = "rem") -> list[Path]:
    from .rem import GaussianEnergies, RemSpec, analyze, simulate_rem

    spec = RemSpec.gaussian(cfg["alpha"], cfg["d"], cfg["beta"])
    res = simulate_rem(spec, GaussianEnergies.for_spec(spec), cfg["trials"], cfg["seed"],
                       cfg["method"], cfg["k_exact"], cfg["n_cap"])
    an = analyze(spec)
    meta = {**_metadata(command, cfg), "sampler": res.metadata(),
            "theory": {"phi": an.phi, "eps0": an.eps0, "beta_c": an.beta_c,
                       "condensed": an.condensed}}
    return [write_csv(out_dir / "rem.csv", res.rows(),
                      ["trial", "log_Z_over_d", "eps_min", "Y2", "Y3"], meta)]


def _experiment(cfg: dict):
    from .simulator import ExperimentConfig

    return ExperimentConfig(cfg["d"], cfg["n"], cfg["h"], GammaKernel(cfg["gamma"]),
                            _load_spectrum(cfg), cfg["num_datasets"], cfg["num_queries"],
                            cfg["seed"], cfg["threads"])


def run_simulate(cfg: dict, out_dir: Path) -> list[Path]:
    from . import simulator as sim

    mode = cfg["mode"]
    if mode == "rem":
        return run_rem(cfg, out_dir, "simulate")
    exp = _experiment(cfg)
    meta = {**_metadata("simulate", cfg), "alpha": exp.alpha}
    outputs = []
    if mode == "fluctuations":
        from .phase_diagram import classify

        s = sim.fluctuation_study(exp, cfg["x_index"])
        rows = [{"resample": i, "log_rho_over_d": s.log_rho_over_d[i], "z": s.z[i],
                 "g": s.g[i], "stable_l": s.stable_l[i], "Y2": s.y2[i], "Y3": s.y3[i],
                 "d_min_sq_over_d": s.d_min_sq_over_d[i]} for i in range(s.z.size)]
        outputs.append(sim_csv(out_dir / "samples.csv", rows, meta))
        outputs.append(write_csv(out_dir / "histogram.csv",
                                 sim.histogram_rows(s.log_rho_over_d, cfg["bins"]),
                                 ["bin_left", "bin_right", "count"], meta))
        point = classify(exp.alpha, exp.h, exp.kernel, exp.spectrum)
        tf = s.tail_exponent
        summary = {
            "regime": point.regime.value, "m_star_theory": point.m_star,
            "phi_1": s.annealed_log_over_d, "f_theory": point.f,
            "annealed_exact_over_d": s.annealed_exact_over_d,
            "typical_log_over_d": s.typical_log_over_d, "standard_error": s.standard_error,
            "histogram_mode": sim.histogram_mode(s.log_rho_over_d, cfg["bins"]),
            "tail_exponent": tf.exponent if tf else None,
            "tail_ci_low": tf.ci_low if tf else None, "tail_ci_high": tf.ci_high if tf else None,
            "tail_threshold": tf.threshold if tf else None, "tail_count": tf.count if tf else 0,
            "Y2_mean": s.y_k[2], "Y3_mean": s.y_k[3],
        }
        outputs.append(write_csv(out_dir / "summary.csv",
                                 [{"key": k, "value": v} for k, v in summary.items()],
                                 ["key", "value"], meta))
    elif mode == "dmin":
        st = sim.d_min_statistics(exp, cfg["x_index"])
        outputs.append(write_csv(out_dir / "dmin.csv",
                                 [{"resample": i, "d_min_sq_over_d": v}
                                  for i, v in enumerate(st.d_min_sq_over_d)],
                                 ["resample", "d_min_sq_over_d"], meta))
        outputs.append(write_csv(out_dir / "dmin_histogram.csv",
                                 sim.histogram_rows(st.d_min_sq_over_d, cfg["bins"]),
                                 ["bin_left", "bin_right", "count"], meta))
        outputs.append(write_csv(out_dir / "summary.csv", [
            {"key": "mean", "value": st.mean}, {"key": "standard_error", "value": st.standard_error},
            {"key": "reconstruction_gap", "value": st.reconstruction_gap}],
            ["key", "value"], meta))
    else:
        from .kl import dkl

        grid = cfg["h_grid"] or [exp.h]
        kernels = [GammaKernel(g) for g in (cfg["gammas"] or [exp.kernel.gamma])]
        rows = []
        for p in sim.empirical_kl_curve(exp, grid, kernels, cfg["normalize"]):
            theory = dkl(exp.alpha, p.h, GammaKernel(p.gamma), exp.spectrum).dkl_per_d
            rows.append({"gamma": p.gamma, "h": p.h, "dkl_per_d": p.dkl_per_d,
                         "standard_error": p.standard_error, "theory_dkl_per_d": theory})
        outputs.append(write_csv(out_dir / "empirical_kl.csv", rows,
                                 ["gamma", "h", "dkl_per_d", "standard_error", "theory_dkl_per_d"],
                                 meta))
    return outputs


def sim_csv(path, rows, meta):
    cols = ["resample", "log_rho_over_d", "z", "g", "stable_l", "Y2", "Y3", "d_min_sq_over_d"]
    return write_csv(path, rows, cols, meta)


RUNNERS = {"phase": run_phase, "kl-curve": run_kl_curve, "simulate": run_simulate,
           "rem": run_rem}


# ---------------------------------------------------------------------------
# argument parsing

def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()] if text.strip() else []


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdkde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config or a previous run's manifest.json")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="random seed (default 0)")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--spectrum", help="eigenvalue file: one 'lambda weight' per line")
        return sp

    ph = common(sub.add_parser("phase", help="transition lines over an alpha grid"))
    ph.add_argument("--alphas", type=_floats, help="comma-separated alpha values")
    ph.add_argument("--gamma", type=float)
    ph.add_argument("--no-h-opt", dest="include_h_opt", action="store_const", const=False)

    kl = common(sub.add_parser("kl-curve", help="theory KL divergence versus bandwidth"))
    kl.add_argument("--alpha", type=float)
    kl.add_argument("--h-grid", dest="h_grid", type=_floats)
    kl.add_argument("--gammas", type=_floats)

    sm = common(sub.add_parser("simulate", help="Monte-Carlo experiment from a config file"))
    sm.add_argument("--mode", choices=["fluctuations", "empirical-kl", "dmin", "rem"])

    rm = common(sub.add_parser("rem", help="Gaussian random energy model simulation"))
    rm.add_argument("--alpha", type=float)
    rm.add_argument("--d", type=int)
    rm.add_argument("--trials", type=int)
    rm.add_argument("--method", choices=["auto", "direct", "extreme"])
    return p


_NON_CONFIG = {"command", "config", "out"}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        raw = load_config(args.config, args.command)
        if not isinstance(raw, dict):
            raise SchemaError(["configuration must be a JSON object"])
        for key, value in vars(args).items():
            if key not in _NON_CONFIG and value is not None:
                raw[key] = value
        cfg = validate(args.command, raw)
        cfg["schema_version"] = SCHEMA_VERSION
        out_dir = Path(args.out)
        outputs = RUNNERS[args.command](cfg, out_dir)
        _manifest(out_dir, args.command, cfg, outputs)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceCapError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConvergenceError, BracketError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HdkdeError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for path in outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
