"""Command-line front end: ``borelbouss {solve,eval,certify,oracle,all} --config run.yaml``.

The config is YAML with the sections listed in ``SCHEMA``; unknown keys are
rejected.  Every output embeds the config hash and a format version, and
reports are written with sorted keys so identical configs give identical
bytes.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .asymptotics import amplitude_sweep
from .borel_series import SeriesOverflowError, p_series, radius_estimate
from .borel_solver import (
    MarchBlowupError,
    PGrid,
    PicardDivergenceError,
    SeedRadiusError,
    march,
    picard_refine,
    read_solution,
    residual_norm,
    write_solution,
)
from .certificates import OMEGA_FLOOR, basic_omega, improved_omega
from .laplace_eval import OutsideValidityError, eval_time, write_physical_csv, write_spectral_csv
from .oracle import compare, integrate_times
from .spectral_field import (
    DivergenceError,
    Lattice,
    NormParams,
    PhysicalParams,
    SpectralState,
    _resize,
    norm,
    project,
    set_fft_workers,
    u1_theta1,
)

log = logging.getLogger("borelbouss")

REPORT_FORMAT_VERSION = 1
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

SCHEMA = {
    "physical": {"nu": 1.0, "mu": 1.0, "a": 0.0, "d": 2},
    "norm": {"gamma": 3.0, "beta": 0.0, "kind": "L1LInf"},
    "lattice": {"K": 4, "ceiling": 32},
    "data": {
        "preset": None,
        "scale": 1.0,
        "initial": [],
        "forcing": [],
        "symmetrize": True,
        "project": False,
    },
    "solver": {
        "dp": 1e-3,
        "P": 2.0,
        "seed_steps": 5,
        "series_order": 30,
        "picard_max_iter": 0,
        "picard_tol": 1e-12,
    },
    "eval": {"times": [0.05, 0.1], "omega": None, "points_per_axis": 8, "oracle_dt": 1e-4},
    "certificate": {"omega0": 1.0, "p0": 1.0, "P_ext": 2.0},
    "asymptotics": {"M_max": 24, "amplitudes": [1.0, 10.0, 100.0]},
    "output": {"dir": "out", "solution": "solution.bin"},
}

PRESETS = {
    "linear-single-mode": {
        "physical": {"nu": 1.0, "mu": 1.0, "a": 0.0},
        "lattice": {"K": 2},
        "data": {"initial": [], "forcing": [{"k": [1, 0], "f": [0, 0.5]}]},
    },
    "nonlinear-two-mode": {
        "physical": {"nu": 1.0, "mu": 1.0, "a": 0.5},
        "lattice": {"K": 4},
        "data": {
            "initial": [
                {"k": [1, 0], "u": [0, 0.05], "theta": 0.05},
                {"k": [0, 1], "u": [0.05, 0], "theta": "0.025j"},
            ],
            "forcing": [{"k": [1, 0], "f": [0, 0.02]}],
        },
    },
    "heat-only": {
        "physical": {"nu": 1.0, "mu": 1.0, "a": 0.0},
        "lattice": {"K": 2},
        "data": {"initial": [{"k": [1, 0], "u": [0, 0], "theta": 0.5}], "forcing": []},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---- config ----


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _complex(value, where: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"{where}: complex pairs must be [re, im]")
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(str(value).replace(" ", "")) if isinstance(value, str) else complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read {value!r} as a complex number") from None


def resolve_config(raw: dict | None) -> dict:
    """Defaults, then preset, then the user's values; unknown keys raise."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    cfg = _merge(SCHEMA, raw)
    preset = cfg["data"]["preset"]
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"data.preset: unknown preset {preset!r} (choose from {sorted(PRESETS)})")
        with_preset = _merge(SCHEMA, PRESETS[preset])
        user_data = raw.get("data", {})
        # the preset fills whatever the user left out
        cfg = _merge(with_preset, {k: v for k, v in raw.items() if k != "data"})
        cfg["data"].update({k: v for k, v in user_data.items()})
        cfg["data"]["preset"] = preset
        if "initial" not in user_data:
            cfg["data"]["initial"] = PRESETS[preset]["data"]["initial"]
        if "forcing" not in user_data:
            cfg["data"]["forcing"] = PRESETS[preset]["data"]["forcing"]
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    ph = cfg["physical"]
    try:
        PhysicalParams(float(ph["nu"]), float(ph["mu"]), float(ph["a"]), int(ph["d"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"physical: {exc}") from None
    nm = cfg["norm"]
    if nm["kind"] not in ("GammaBeta", "L1LInf"):
        raise ConfigError(f"norm.kind: must be GammaBeta or L1LInf, got {nm['kind']!r}")
    if nm["kind"] == "GammaBeta" and not float(nm["gamma"]) > int(ph["d"]):
        raise ConfigError(
            f"norm.gamma: GammaBeta norm needs gamma > d (gamma={nm['gamma']}, d={ph['d']})"
        )
    if float(nm["beta"]) < 0:
        raise ConfigError("norm.beta: must be >= 0")
    lat = cfg["lattice"]
    if int(lat["K"]) < 1:
        raise ConfigError("lattice.K: must be >= 1")
    if int(lat["ceiling"]) < int(lat["K"]):
        raise ConfigError("lattice.ceiling: must be >= lattice.K")
    so = cfg["solver"]
    if not float(so["dp"]) > 0:
        raise ConfigError("solver.dp: must be positive")
    if not float(so["P"]) >= 2 * float(so["dp"]):
        raise ConfigError("solver.P: must cover at least two steps")
    if int(so["seed_steps"]) < 0 or int(so["series_order"]) < 1:
        raise ConfigError("solver.seed_steps must be >= 0 and solver.series_order >= 1")
    ev = cfg["eval"]
    if not isinstance(ev["times"], list):
        raise ConfigError("eval.times: must be a list")
    for i, t in enumerate(ev["times"]):
        if not float(t) > 0:
            raise ConfigError(f"eval.times[{i}]: must be positive")
    ce = cfg["certificate"]
    if not float(ce["p0"]) > 0:
        raise ConfigError("certificate.p0: must be positive")
    if float(ce["P_ext"]) < 2 * float(ce["p0"]):
        raise ConfigError("certificate.P_ext: must be >= 2 * certificate.p0")
    if float(ce["omega0"]) < 0:
        raise ConfigError("certificate.omega0: must be >= 0")
    if int(cfg["asymptotics"]["M_max"]) < 8:
        raise ConfigError("asymptotics.M_max: must be >= 8 for the Gevrey fit")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return resolve_config(raw)


# ---- data assembly ----


def physical_params(cfg) -> PhysicalParams:
    ph = cfg["physical"]
    return PhysicalParams(float(ph["nu"]), float(ph["mu"]), float(ph["a"]), int(ph["d"]))


def norm_params(cfg) -> NormParams:
    nm = cfg["norm"]
    return NormParams(float(nm["gamma"]), float(nm["beta"]), nm["kind"])


def lattice_of(cfg) -> Lattice:
    return Lattice(int(cfg["physical"]["d"]), int(cfg["lattice"]["K"]))


def _mode_k(entry, where, lat):
    k = entry.get("k")
    if not isinstance(k, (list, tuple)) or len(k) != lat.d:
        raise ConfigError(f"{where}.k: needs {lat.d} integer components")
    k = [int(c) for c in k]
    if not lat.contains(k):
        raise ConfigError(f"{where}.k: {k} lies outside the lattice (K={lat.K})")
    if not any(k):
        raise ConfigError(f"{where}.k: the k=0 mode must be zero (mean-zero data)")
    return k


def build_data(cfg) -> tuple[SpectralState, np.ndarray]:
    """Initial state and forcing from the config, with validation."""
    lat = lattice_of(cfg)
    d = lat.d
    data = cfg["data"]
    sym = bool(data["symmetrize"])
    modes = []
    for i, e in enumerate(data["initial"]):
        where = f"data.initial[{i}]"
        extra = set(e) - {"k", "u", "theta"}
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        k = _mode_k(e, where, lat)
        u = e.get("u", [0] * d)
        if len(u) != d:
            raise ConfigError(f"{where}.u: needs {d} components")
        uc = [_complex(v, f"{where}.u[{j}]") for j, v in enumerate(u)]
        modes.append((k, uc, _complex(e.get("theta", 0), f"{where}.theta")))
    initial = SpectralState.from_modes(lat, modes, symmetrize=sym)
    fmodes = []
    for i, e in enumerate(data["forcing"]):
        where = f"data.forcing[{i}]"
        extra = set(e) - {"k", "f"}
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        k = _mode_k(e, where, lat)
        fv = e.get("f", [0] * d)
        if len(fv) != d:
            raise ConfigError(f"{where}.f: needs {d} components")
        fmodes.append((k, [_complex(v, f"{where}.f[{j}]") for j, v in enumerate(fv)], 0))
    f_hat = SpectralState.from_modes(lat, fmodes, symmetrize=sym).u_hat
    scale = float(data["scale"])
    initial, f_hat = initial * scale, f_hat * scale
    if data["project"]:
        initial = SpectralState(lat, project(initial.u_hat, lat), initial.theta_hat)
        f_hat = project(f_hat, lat)
    if not initial.is_divergence_free():
        raise ConfigError("data.initial: velocity is not divergence-free (set data.project: true)")
    if not SpectralState(lat, f_hat, np.zeros(lat.shape)).is_divergence_free():
        raise ConfigError("data.forcing: not divergence-free (set data.project: true)")
    return initial, f_hat


# ---- outputs ----


def _write_json(path: Path, payload: dict, chash: str):
    body = {"format_version": REPORT_FORMAT_VERSION, "config_hash": chash, **payload}
    path.write_text(json.dumps(_clean(body), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def _out_dir(cfg, override) -> Path:
    out = Path(override or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _discarded_mass(initial, f_hat, pp, cfg) -> float:
    """l1 mass of (u1, theta1) that falls outside the lattice."""
    lat = initial.lattice
    big = Lattice(lat.d, 2 * lat.K)
    ff = _resize(f_hat, lat.K, big.K, lat.d)
    u1 = u1_theta1(initial.embed(big), ff, pp).pair
    inside = _resize(_resize(u1, big.K, lat.K, lat.d), lat.K, big.K, lat.d)
    return float(np.sum(np.abs(u1 - inside)))


# ---- subcommands ----


def cmd_solve(cfg, out: Path) -> dict:
    pp, npar = physical_params(cfg), norm_params(cfg)
    initial, f_hat = build_data(cfg)
    so = cfg["solver"]
    grid = PGrid.from_horizon(float(so["dp"]), float(so["P"]))
    series = p_series(initial, f_hat, pp, int(so["series_order"]))
    try:
        radius = radius_estimate(series, npar)
    except ValueError:
        radius = math.inf
    sol = march(initial, f_hat, pp, grid, seed=series, seed_steps=int(so["seed_steps"]))
    if int(so["picard_max_iter"]) > 0:
        sol = picard_refine(sol, int(so["picard_max_iter"]), float(so["picard_tol"]),
                            norm_params=npar)
    res = residual_norm(sol, npar)
    chash = config_hash(cfg)
    write_solution(out / cfg["output"]["solution"], sol, chash)
    report = {
        "command": "solve",
        "grid": {"dp": grid.dp, "n": grid.n, "P": grid.P},
        "residual_norm": res,
        "series_radius_estimate": radius,
        "discarded_mass_u1": _discarded_mass(initial, f_hat, pp, cfg),
        "norm_initial": norm(initial, npar),
        "picard": sol.meta.get("picard"),
    }
    _write_json(out / "solve_report.json", report, chash)
    log.info("solve: n=%d residual=%.3e radius=%.3g", grid.n, res, radius)
    return report


def _load_solution(cfg, out: Path, path=None):
    path = Path(path) if path else out / cfg["output"]["solution"]
    if not path.is_file():
        raise ConfigError(f"solution file {path} not found; run solve first")
    sol, header = read_solution(path)
    lat = lattice_of(cfg)
    if sol.lattice != lat:
        raise ConfigError(f"solution file lattice {sol.lattice} does not match config lattice {lat}")
    return sol


def _omega_used(cfg, sol) -> float:
    if cfg["eval"]["omega"] is not None:
        return float(cfg["eval"]["omega"])
    return basic_omega(sol.initial, sol.forcing, sol.params, norm_params(cfg))


def _samples(cfg, sol, omega):
    rows = []
    for t in cfg["eval"]["times"]:
        t = float(t)
        try:
            rows.append((t, eval_time(sol, t, omega, norm_params(cfg))))
        except OutsideValidityError:
            log.warning("t=%g outside validity (omega=%g); row flagged", t, omega)
            rows.append((t, None))
    return rows


def cmd_eval(cfg, out: Path, solution_path=None) -> dict:
    sol = _load_solution(cfg, out, solution_path)
    omega = _omega_used(cfg, sol)
    rows = _samples(cfg, sol, omega)
    chash = config_hash(cfg)
    write_spectral_csv(out / "eval_spectral.csv", rows, sol.lattice, chash)
    write_physical_csv(out / "eval_physical.csv", rows, int(cfg["eval"]["points_per_axis"]), chash,
                       sol.lattice.d)
    return {"omega": omega, "valid": [s is not None for _, s in rows]}


def cmd_certify(cfg, out: Path, solution_path=None) -> dict:
    sol = _load_solution(cfg, out, solution_path)
    pp, npar = sol.params, norm_params(cfg)
    ce = cfg["certificate"]
    p0, P_ext = float(ce["p0"]), float(ce["P_ext"])
    try:
        sol.grid.index_of(p0)
    except ValueError as exc:
        raise ConfigError(f"certificate.p0: {exc}") from None
    cert = improved_omega(sol, pp, npar, float(ce["omega0"]), p0, P_ext)
    asy = cfg["asymptotics"]
    ceiling = int(cfg["lattice"]["ceiling"])
    gevrey = {}
    try:
        sweep = amplitude_sweep(sol.initial, sol.forcing, pp, int(asy["M_max"]),
                                tuple(float(c) for c in asy["amplitudes"]), ceiling, npar)
        gevrey = {str(c): r.to_dict() for c, r in sweep.items()}
    except ValueError as exc:
        gevrey = {"error": str(exc)}
    report = {
        "command": "certify",
        "certificate": cert.to_dict(),
        "global_existence_signal": cert.omega_basic <= OMEGA_FLOOR * (1 + 1e-9),
        "gevrey": gevrey,
    }
    _write_json(out / "certificate.json", report, config_hash(cfg))
    if cert.inconclusive:
        log.warning("improved certificate inconclusive: %s", "; ".join(cert.notes))
    return report


def cmd_oracle(cfg, out: Path, solution_path=None) -> dict:
    sol = _load_solution(cfg, out, solution_path)
    omega = _omega_used(cfg, sol)
    rows = _samples(cfg, sol, omega)
    valid_t = [t for t, s in rows if s is not None]
    states = integrate_times(sol.initial, sol.forcing, sol.params,
                             float(cfg["eval"]["oracle_dt"]), valid_t) if valid_t else []
    ref = dict(zip(valid_t, states))
    chash = config_hash(cfg)
    lines = [f"# format_version={REPORT_FORMAT_VERSION}", f"# config_hash={chash}",
             "t,valid,sup_err,l2_err,rel_l2,norm_err"]
    metrics = []
    for t, s in rows:
        if s is None:
            lines.append(f"{t!r},0,,,,")
            continue
        rep = compare(s.state, ref[t], norm_params(cfg))
        metrics.append({"t": t, **rep.to_dict()})
        lines.append(f"{t!r},1,{rep.sup_err!r},{rep.l2_err!r},{rep.rel_l2!r},{rep.norm_err!r}")
    (out / "oracle.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"metrics": metrics}


# ---- entry point ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="borelbouss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("solve", "march the Borel-plane equation and write the solution file"),
        ("eval", "Laplace-evaluate a solution at the configured times"),
        ("certify", "compute existence-time certificates and the Gevrey report"),
        ("oracle", "compare against the time-stepping oracle"),
        ("all", "solve, eval, certify and oracle in sequence"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", "-c", help="YAML run configuration (defaults if omitted)")
        p.add_argument("--output-dir", "-o", help="override output.dir")
        p.add_argument("--solution", help="solution file to read (eval/certify/oracle)")
        p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    set_fft_workers(args.threads)
    try:
        cfg = load_config(args.config) if args.config else resolve_config({})
        out = _out_dir(cfg, args.output_dir)
        cmds = {
            "solve": lambda: cmd_solve(cfg, out),
            "eval": lambda: cmd_eval(cfg, out, args.solution),
            "certify": lambda: cmd_certify(cfg, out, args.solution),
            "oracle": lambda: cmd_oracle(cfg, out, args.solution),
        }
        if args.command == "all":
            for name in ("solve", "eval", "certify", "oracle"):
                cmds[name]()
        else:
            cmds[args.command]()
    except (MarchBlowupError, SeriesOverflowError, PicardDivergenceError, SeedRadiusError,
            FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ConfigError, DivergenceError, ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
