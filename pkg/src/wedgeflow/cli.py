"""Command-line front end: ``wedgeflow <command> [options]``.

Parameters come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines (``#`` comments), then command-line flags.  Every run
writes the resolved configuration as ``<command>.config`` next to its results;
passing that file back with ``--config`` reproduces the run.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import WedgeGrid, assemble_forms
from .evolve import (
    evolve,
    fit_decay,
    gaussian_bump_datum,
    generic_datum,
    ground_state_datum,
    prepare_initial,
)
from .geometry import (
    BUILTIN_PROFILES,
    PROFILE_DESCRIPTIONS,
    builtin_profile,
    check_a,
    load_profile_table,
    twist_constants,
)
from .hardy import certify_global
from .spectral import eigenvalue_trajectory, exact_spectrum, lowest_eigenpairs

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

DATUMS = {"ground": ground_state_datum, "generic": generic_datum, "bump": gaussian_bump_datum}

# key -> (type, default) per command; common keys are merged in
COMMON = {
    "a": (float, 1.0),
    "profile": (str, "straight"),
    "profile_table": (str, ""),
    "rho_max": (float, 12.0),
    "n_rho": (int, 200),
    "n_phi": (int, 32),
    "seed": (int, 0),
    "out": (str, "."),
}
COMMANDS = {
    "profiles": {},
    "spectrum": {"k": (int, 3), "n_rho": (int, 400), "n_phi": (int, 64), "tol": (float, 1e-9)},
    "trajectory": {"s_values": (str, "0,2,4,6,8,10,12"), "tol": (float, 1e-9), "threads": (int, 0)},
    "evolve": {"s_max": (float, 12.0), "ds": (float, 0.01), "datum": (str, "generic")},
    "rate": {
        "s_max": (float, 12.0),
        "ds": (float, 0.01),
        "datum": (str, "generic"),
        "fit_lo": (float, math.nan),
        "fit_hi": (float, math.nan),
    },
    "hardy": {"R": (float, 6.0), "n_rho": (int, 240), "n_phi": (int, 64), "spot_checks": (int, 100)},
}


class InputError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def read_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, val = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def resolve(command: str, file_values: dict[str, str], flags: dict) -> dict:
    """Defaults < config file < flags, converted to the declared types."""
    schema = {**COMMON, **COMMANDS[command]}
    unknown = set(file_values) - set(schema) - {"command"}
    if unknown:
        raise InputError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
    cfg = {}
    for key, (typ, default) in schema.items():
        raw = flags.get(key)
        if raw is None:
            raw = file_values.get(key, default)
        try:
            cfg[key] = typ(raw)
        except (TypeError, ValueError):
            raise InputError(f"invalid value for {key}: {raw!r}") from None
    if "threads" in cfg and cfg["threads"] <= 0:
        cfg["threads"] = int(os.environ.get("WEDGEFLOW_THREADS", "1") or 1)
    return cfg


def dump_config(command: str, cfg: dict) -> str:
    lines = [f"command = {command}"]
    lines += [f"{k} = {fmt(v)}" for k, v in cfg.items()]
    return "\n".join(lines) + "\n"


def _profile(cfg):
    if cfg["profile_table"]:
        return load_profile_table(cfg["profile_table"])
    return builtin_profile(cfg["profile"])


def _grid(cfg) -> WedgeGrid:
    return WedgeGrid(check_a(cfg["a"]), cfg["rho_max"], cfg["n_rho"], cfg["n_phi"])


def _write_csv(path: Path, header, rows, footer: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
        if footer:
            fh.write(footer + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


# -- commands ------------------------------------------------------------------


def cmd_profiles(cfg, out: Path) -> dict:
    rows = []
    for name in sorted(BUILTIN_PROFILES):
        p = builtin_profile(name)
        C, sup_tp = twist_constants(p)
        rows.append((name, p.support_radius, C, sup_tp))
        print(f"{name:12s} {PROFILE_DESCRIPTIONS[name]}")
    _write_csv(out / "profiles.csv", ["name", "support_radius", "C", "sup_theta_prime"], rows)
    return {}


def cmd_spectrum(cfg, out: Path) -> dict:
    grid = _grid(cfg)
    profile = _profile(cfg)
    forms = assemble_forms(grid, profile, 0.0, warn=False)
    pairs = lowest_eigenpairs(forms, cfg["k"], cfg["tol"], seed=cfg["seed"])
    exact = exact_spectrum(grid.a, cfg["k"])
    rows = [(i, p.value, e.value, abs(p.value - e.value)) for i, (p, e) in enumerate(zip(pairs, exact))]
    _write_csv(out / "spectrum.csv", ["k", "computed", "exact", "abs_err"], rows)
    for r in rows:
        print(f"k={r[0]}  computed={r[1]:.10f}  exact={r[2]:.10f}  abs_err={r[3]:.3e}")
    return {}


def cmd_trajectory(cfg, out: Path) -> dict:
    grid = _grid(cfg)
    profile = _profile(cfg)
    try:
        s_values = [float(x) for x in cfg["s_values"].split(",") if x.strip()]
    except ValueError:
        raise InputError("s_values must be a comma-separated list of numbers") from None
    if not s_values or min(s_values) < 0:
        raise InputError("s_values must be non-empty and non-negative")
    traj = eigenvalue_trajectory(grid, profile, s_values, cfg["tol"], threads=cfg["threads"])
    limit = 0.5 + 1.0 / (4.0 * grid.a)
    _write_csv(
        out / "trajectory.csv",
        ["s", "lambda0", "residual"],
        [(p.s, p.lambda0, p.residual) for p in traj],
        footer=f"# limit = {fmt(limit)}",
    )
    for p in traj:
        print(f"s={p.s:6.2f}  lambda0={p.lambda0:.10f}")
    print(f"limit = {limit}")
    return {}


def _run_series(cfg):
    grid = _grid(cfg)
    profile = _profile(cfg)
    if cfg["datum"] not in DATUMS:
        raise InputError(f"unknown datum {cfg['datum']!r}; valid: {', '.join(sorted(DATUMS))}")
    phi0 = prepare_initial(grid, DATUMS[cfg["datum"]](grid.a), normalize=True)
    series = evolve(grid, profile, phi0, cfg["s_max"], cfg["ds"])
    return grid, profile, series


def _write_series(out: Path, series) -> None:
    rows = [(s, math.expm1(s), n, math.log(n) if n > 0 else -math.inf) for s, n in series]
    _write_csv(out / "decay.csv", ["s", "t", "norm", "log_norm"], rows)


def cmd_evolve(cfg, out: Path) -> dict:
    _, _, series = _run_series(cfg)
    _write_series(out, series)
    print(f"s={series[-1][0]:.4f}  norm={series[-1][1]:.6e}")
    return {}


def cmd_rate(cfg, out: Path) -> dict:
    window = None
    if not (math.isnan(cfg["fit_lo"]) and math.isnan(cfg["fit_hi"])):
        lo = 0.5 * cfg["s_max"] if math.isnan(cfg["fit_lo"]) else cfg["fit_lo"]
        hi = cfg["s_max"] if math.isnan(cfg["fit_hi"]) else cfg["fit_hi"]
        if lo < 0 or hi > cfg["s_max"]:
            raise InputError("fit window must lie inside [0, s_max]")
        window = (lo, hi)
    grid, profile, series = _run_series(cfg)
    fit = fit_decay(series, window)
    _write_series(out, series)
    summary = fit.to_dict(grid.a)
    summary["profile"] = profile.name
    summary["a"] = grid.a
    if not profile.compact:
        summary["hypothesis_violated"] = "supp theta' not compact"
        warnings.warn("profile twist is not compactly supported; the limit rate is not covered", stacklevel=2)
    _write_json(out / "rate.json", summary)
    print(
        f"gamma_hat={fit.gamma_hat:.6f}  gamma_theory={summary['gamma_theory']:.6f}  "
        f"relative_gap={summary['relative_gap']:.3e}  rms={fit.rms_residual:.2e}"
    )
    return summary


def cmd_hardy(cfg, out: Path) -> dict:
    if not (cfg["R"] > 0 and math.isfinite(cfg["R"])):
        raise InputError("R must be a positive number")
    profile = _profile(cfg)
    cert = certify_global(
        profile,
        cfg["R"],
        check_a(cfg["a"]),
        cfg["n_rho"],
        cfg["n_phi"],
        spot_checks=cfg["spot_checks"],
        seed=cfg["seed"],
    )
    payload = cert.to_dict()
    _write_json(out / "hardy.json", payload)
    print(f"lambda_R={cert.lambda_R:.6e} (raw {cert.lambda_R_raw:.3e})  c={cert.c:.6e}  critical={cert.critical_flag}")
    return payload


HANDLERS = {
    "profiles": cmd_profiles,
    "spectrum": cmd_spectrum,
    "trajectory": cmd_trajectory,
    "evolve": cmd_evolve,
    "rate": cmd_rate,
    "hardy": cmd_hardy,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wedgeflow", description="Heat flow and Hardy inequalities in curved wedges.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file; flags override its values")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--seed", type=int)
        p.add_argument("--a", type=float, help="opening angle is 2*pi*a, a in (0,1] (default 1)")
        p.add_argument("--profile", help=f"built-in profile: {', '.join(sorted(BUILTIN_PROFILES))}")
        p.add_argument("--profile-table", dest="profile_table", help="three-column r theta theta' table")
        p.add_argument("--rho-max", dest="rho_max", type=float)
        p.add_argument("--n-rho", dest="n_rho", type=int)
        p.add_argument("--n-phi", dest="n_phi", type=int)

    p = sub.add_parser("profiles", help="list built-in profiles")
    common(p)
    p = sub.add_parser("spectrum", help="lowest eigenvalues against the exact spectrum")
    common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--tol", type=float)
    p = sub.add_parser("trajectory", help="lowest eigenvalue of L_s along s")
    common(p)
    p.add_argument("--s-values", dest="s_values", help="comma-separated s values")
    p.add_argument("--tol", type=float)
    p.add_argument("--threads", type=int, help="worker cap (fallback: WEDGEFLOW_THREADS)")
    for name, help_ in (("evolve", "integrate the self-similar flow"), ("rate", "fit the decay rate")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--smax", "--s-max", dest="s_max", type=float)
        p.add_argument("--ds", type=float)
        p.add_argument("--datum", choices=sorted(DATUMS))
        if name == "rate":
            p.add_argument("--fit-lo", dest="fit_lo", type=float)
            p.add_argument("--fit-hi", dest="fit_hi", type=float)
    p = sub.add_parser("hardy", help="local Hardy constant and global certificate")
    common(p)
    p.add_argument("--R", type=float)
    p.add_argument("--spot-checks", dest="spot_checks", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config(args.config) if args.config else {}
        if file_values.get("command", command) != command:
            raise InputError(f"config file is for {file_values['command']!r}, not {command!r}")
        cfg = resolve(command, file_values, flags)
        if "a" in cfg:
            check_a(cfg["a"])
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        text = dump_config(command, cfg)
        (out / f"{command}.config").write_text(text)
        sys.stdout.write(text)
        HANDLERS[command](cfg, out)
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError, AssertionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
