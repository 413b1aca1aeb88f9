"""Command-line entry point: ``hypfree [--config FILE] [--out DIR] SUBCOMMAND``.

Configuration is an INI file whose sections mirror the modules.  Every key
has a default (``--dump-defaults`` prints them); unknown sections or keys
are rejected before any computation starts.  Each run writes its CSV outputs
and a ``manifest.json`` (config hash, seed, versions, output hashes) into
the output directory.

Exit codes: 0 success, 1 an inequality or property check failed, 2 bad
configuration, 3 numerical failure.  Errors are reported on stderr as one
JSON line.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import density as dens
from . import potentials as pot
from .energy import (ball_energy_upper_bound, divergence_scan, entropy_lower_bound_check, lemma61_check,
                     prop63_lower_bound_check, total_energy)
from .errors import (BracketError, ClassificationInputError, ConfigurationError, DegenerateInputError,
                     DomainError, HypfreeError, InfeasibleError, IterationLimitError, NumericalDegeneracyError)
from .geometry import Space
from .hls import HlsConfig, estimate_C0, integrated_hls_deficit, log_hls_deficit
from .particles import SimConfig, read_points, run, write_observables, write_points
from .phase import PhaseConfig, sweep
from .steady import fixed_point, initial_guess, write_result

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS = {
    "run": {"seed": "0"},
    "space": {"n": "2", "c": "1.0", "c_upper": "", "c_lower": ""},
    "potential": {"kind": "linear", "a1": "0.0", "a2": "3.0", "coef": "1.0", "alpha": "1.0", "rate": "1.0"},
    "density": {"kind": "ball", "radius": "1.0", "sigma": "0.5", "rate": "1.0", "r_in": "0.5",
                "r_out": "1.0", "cells": "128", "path": ""},
    "ball-scan": {"r_min": "1e-4", "r_max": "50.0", "count": "25", "eps": "0.5", "cells": "64",
                  "slope_threshold": "0.1"},
    "hls": {"ns": "2,3", "cs": "0.25,1,4", "cells": "192", "C0": "auto"},
    "bounds": {"cells": "192", "eps": "1.0", "C0": "auto", "tolerance": "1e-4"},
    "simulate": {"N": "200", "dt": "0.01", "steps": "2000", "diffusion": "true", "init_radius": "1.0",
                 "init_file": "", "record_every": "10", "adaptive": "auto"},
    "steady": {"cells": "128", "theta_max": "", "width": "1.0", "damping": "0.3", "tol": "1e-8",
               "max_iter": "5000"},
    "phase": {"ns": "2", "cs": "1.0", "family": "linear", "coefs": "0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5,2.75,3",
              "methods": "ball_scan,fixed_point,particles", "N": "400", "dt": "0.01", "steps": "20000",
              "fp_max_iter": "5000"},
}


class Config:
    """Validated view of the INI sections with typed getters."""

    def __init__(self, parser: configparser.ConfigParser, text: str):
        self.parser = parser
        self.text = text

    @classmethod
    def load(cls, path: str | None) -> "Config":
        parser = configparser.ConfigParser(interpolation=None, empty_lines_in_values=False)
        parser.optionxform = str
        parser.read_dict(DEFAULTS)
        user = ""
        if path is not None:
            try:
                user = Path(path).read_text()
            except OSError as exc:
                raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
            probe = configparser.ConfigParser(interpolation=None)
            probe.optionxform = str
            try:
                probe.read_string(user, source=str(path))
            except configparser.MissingSectionHeaderError as exc:
                raise ConfigurationError(f"{path}: malformed config, line {exc.lineno}: "
                                         f"key outside any [section]") from None
            except configparser.ParsingError as exc:
                where = "; ".join(f"line {ln}: {text.strip()!r}" for ln, text in exc.errors)
                raise ConfigurationError(f"{path}: malformed config, {where}") from None
            except configparser.Error as exc:
                line = getattr(exc, "lineno", None)
                at = f"line {line}: " if line is not None else ""
                raise ConfigurationError(f"{path}: malformed config, {at}{exc.message}") from None
            for section in probe.sections():
                if section not in DEFAULTS:
                    raise ConfigurationError(f"{path}: unknown section [{section}]")
                for key in probe[section]:
                    if key not in DEFAULTS[section]:
                        raise ConfigurationError(f"{path}: unknown key '{key}' in [{section}]")
                    parser[section][key] = probe[section][key]
        return cls(parser, user)

    def resolved(self) -> str:
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()

    def get(self, section, key) -> str:
        return self.parser[section][key].strip()

    def _typed(self, section, key, kind):
        raw = self.get(section, key)
        try:
            return kind(raw)
        except ValueError:
            raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None

    def float(self, section, key) -> float:
        return self._typed(section, key, float)

    def int(self, section, key) -> int:
        return self._typed(section, key, int)

    def bool(self, section, key) -> bool:
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ConfigurationError(f"[{section}] {key} must be true or false") from None

    def optional_float(self, section, key):
        return None if self.get(section, key) == "" else self.float(section, key)

    def floats(self, section, key) -> tuple:
        raw = self.get(section, key)
        try:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        except ValueError:
            raise ConfigurationError(f"[{section}] {key} must be a comma-separated list of numbers") from None

    def words(self, section, key) -> tuple:
        return tuple(x.strip() for x in self.get(section, key).split(",") if x.strip())


def dump_defaults() -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(DEFAULTS)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# --- builders --------------------------------------------------------------------

def build_space(cfg: Config) -> Space:
    c_upper, c_lower = cfg.optional_float("space", "c_upper"), cfg.optional_float("space", "c_lower")
    band = None
    if c_upper is not None or c_lower is not None:
        c = cfg.float("space", "c")
        band = (c if c_upper is None else c_upper, c if c_lower is None else c_lower)
    return Space(cfg.int("space", "n"), cfg.float("space", "c"), band)


def build_potential(cfg: Config, space: Space) -> pot.Potential:
    kind = cfg.get("potential", "kind")
    f = lambda key: cfg.float("potential", key)  # noqa: E731
    builders = {
        "linear": lambda: pot.linear(f("a2"), space.c),
        "log": lambda: pot.logarithmic(f("a1")),
        "log_linear": lambda: pot.log_linear(f("a1"), f("a2"), space.c),
        "power": lambda: pot.power_law(f("coef"), f("alpha")),
        "quadratic": lambda: pot.quadratic(f("coef")),
        "exponential": lambda: pot.exponential(f("rate"), f("coef")),
        "constant": lambda: pot.constant(f("coef")),
        "log_sinhc": lambda: pot.log_sinhc_profile(space.c, f("coef")),
    }
    if kind not in builders:
        raise ConfigurationError(f"[potential] kind = {kind!r}; expected one of {sorted(builders)}")
    return builders[kind]()


def build_density(cfg: Config, space: Space) -> dens.RadialDensity:
    kind = cfg.get("density", "kind")
    f = lambda key: cfg.float("density", key)  # noqa: E731
    cells = cfg.int("density", "cells")
    if kind == "ball":
        return dens.uniform_ball(space, f("radius"), cells=cells)
    if kind == "gaussian":
        return dens.gaussian_like(space, f("sigma"), cells=cells)
    if kind == "exponential":
        return dens.exponential_like(space, f("rate"), cells=cells)
    if kind == "shell":
        return dens.shell(space, f("r_in"), f("r_out"), cells=cells)
    if kind == "csv":
        path = cfg.get("density", "path")
        if not path:
            raise ConfigurationError("[density] kind = csv needs a path")
        return dens.read_csv(space, path)
    raise ConfigurationError(f"[density] kind = {kind!r}; expected ball, gaussian, exponential, shell or csv")


def _hls_config(cfg: Config, section: str, n: int) -> HlsConfig:
    raw = cfg.get(section, "C0")
    if raw == "auto":
        return estimate_C0(n)
    return HlsConfig(cfg.float(section, "C0"), "user-supplied")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


# --- subcommands -------------------------------------------------------------------

def cmd_energy(cfg: Config, out: Path, args) -> tuple[int, list]:
    space = build_space(cfg)
    rep = total_energy(build_density(cfg, space), build_potential(cfg, space))
    _write_rows(out / "energy.csv", ["entropy", "interaction", "total", "error_estimate", "diverged"],
                [[rep.entropy, rep.interaction, rep.total, rep.error_estimate, str(rep.diverged).lower()]])
    print(f"total energy {rep.total!r}")
    return EXIT_OK, [out / "energy.csv"]


def cmd_ball_scan(cfg: Config, out: Path, args) -> tuple[int, list]:
    space = build_space(cfg)
    h = build_potential(cfg, space)
    s = "ball-scan"
    radii = np.geomspace(cfg.float(s, "r_min"), cfg.float(s, "r_max"), cfg.int(s, "count"))
    eps, cells = cfg.float(s, "eps"), cfg.int(s, "cells")
    scan = divergence_scan(space, h, radii, eps=eps, cells=cells, slope_threshold=cfg.float(s, "slope_threshold"))
    rows = []
    for i, R in enumerate(scan.radii):
        b = ball_energy_upper_bound(space, h, float(R), eps, cells=cells)
        rows.append([float(R), scan.entropy[i], scan.interaction[i], scan.total[i], b.bound, b.slack])
    _write_rows(out / "ball_scan.csv", ["R", "entropy", "interaction", "total", "bound", "slack"], rows)
    print(f"verdict {scan.verdict} small_slope={scan.small_slope!r} large_slope={scan.large_slope!r}")
    return EXIT_OK, [out / "ball_scan.csv"]


def cmd_hls(cfg: Config, out: Path, args) -> tuple[int, list]:
    rows, worst = [], math.inf
    for n in (int(x) for x in cfg.floats("hls", "ns")):
        hc = _hls_config(cfg, "hls", n)
        for c in cfg.floats("hls", "cs"):
            space = Space(n, c)
            for rho in dens.builtin_family(space, cells=cfg.int("hls", "cells")):
                a, b = log_hls_deficit(rho, hc), integrated_hls_deficit(rho, hc)
                worst = min(worst, a, b)
                rows.append([n, float(c), rho.label, hc.C0, a, b])
    _write_rows(out / "hls.csv", ["n", "c", "density", "C0", "deficit_pole", "deficit_integrated"], rows)
    print(f"minimum deficit {worst!r}")
    return EXIT_OK if worst >= -1e-6 else EXIT_VIOLATION, [out / "hls.csv"]


def cmd_bounds(cfg: Config, out: Path, args) -> tuple[int, list]:
    space = build_space(cfg)
    h = build_potential(cfg, space)
    hc = _hls_config(cfg, "bounds", space.n)
    consts = pot.lemma62_constants(h, space.n, space.c_lower, eps_hint=cfg.float("bounds", "eps"))
    tol = cfg.float("bounds", "tolerance")
    rows, ok = [], True
    for rho in dens.builtin_family(space, cells=cfg.int("bounds", "cells")):
        lo, mid, hi = lemma61_check(rho)
        gap63 = prop63_lower_bound_check(rho, h, hc.C0, consts)
        try:
            gap65 = entropy_lower_bound_check(rho, h, hc.C0)
        except (ConfigurationError, InfeasibleError):
            gap65 = math.nan
        ok &= lo <= mid + 1e-6 and mid <= hi + 1e-6 and gap63 >= -tol and not gap65 < -tol
        rows.append([rho.label, lo, mid, hi, gap63, gap65])
    _write_rows(out / "bounds.csv",
                ["density", "w1_lower", "pair_distance", "w1_upper", "w1_bound_gap", "entropy_bound_gap"], rows)
    print("all bounds hold" if ok else "a bound is violated")
    return EXIT_OK if ok else EXIT_VIOLATION, [out / "bounds.csv"]


def cmd_simulate(cfg: Config, out: Path, args) -> tuple[int, list]:
    space = build_space(cfg)
    h = build_potential(cfg, space)
    s = "simulate"
    sim = SimConfig(N=cfg.int(s, "N"), dt=cfg.float(s, "dt"), steps=cfg.int(s, "steps"),
                    diffusion=cfg.bool(s, "diffusion"), seed=cfg.int("run", "seed"),
                    init_radius=cfg.float(s, "init_radius"), record_every=cfg.int(s, "record_every"),
                    adaptive=cfg.get(s, "adaptive"))
    init = cfg.get(s, "init_file")
    rep = run(sim, h, space, read_points(init) if init else None)
    write_observables(rep, out / "observables.csv")
    write_points(rep.final.points, out / "points_final.csv")
    print(f"verdict {rep.verdict} slope={rep.spread_slope!r} log_rate={rep.dispersion_log_rate!r}")
    return EXIT_OK, [out / "observables.csv", out / "points_final.csv"]


def cmd_steady(cfg: Config, out: Path, args) -> tuple[int, list]:
    space = build_space(cfg)
    h = build_potential(cfg, space)
    s = "steady"
    rho0 = initial_guess(space, cfg.int(s, "cells"), cfg.optional_float(s, "theta_max"), cfg.float(s, "width"))
    res = fixed_point(rho0, h, cfg.float(s, "damping"), cfg.float(s, "tol"), cfg.int(s, "max_iter"))
    write_result(res, h, out / "profile.csv")
    print(f"outcome {res.outcome} iterations={res.iterations} residual={res.residual!r}")
    return EXIT_OK, [out / "profile.csv", out / "profile.csv.meta.json"]


def cmd_phase(cfg: Config, out: Path, args) -> tuple[int, list]:
    s = "phase"
    pc = PhaseConfig(ns=tuple(int(x) for x in cfg.floats(s, "ns")), cs=cfg.floats(s, "cs"),
                     family=cfg.get(s, "family"), coefs=cfg.floats(s, "coefs"), methods=cfg.words(s, "methods"),
                     seed=cfg.int("run", "seed"), threads=args.threads, N=cfg.int(s, "N"), dt=cfg.float(s, "dt"),
                     steps=cfg.int(s, "steps"), fp_max_iter=cfg.int(s, "fp_max_iter"))
    table = sweep(pc)
    table.write_csv(out / "phase.csv")
    disagree = sum(not r.agree for r in table.rows)
    print(f"{len(table.rows)} rows, {disagree} disagreeing with the analytic regime")
    return EXIT_OK if disagree == 0 else EXIT_VIOLATION, [out / "phase.csv"]


def selftest_checks():
    """Reduced-resolution property checks: (name, callable returning bool)."""
    from .density import pushforward_entropy_residual

    def rauch():
        rng = np.random.default_rng(1)
        for n in (2, 3, 4):
            for c in (0.25, 1.0, 4.0):
                sp = Space(n, c)
                x, y = sp.random_points(rng, 200, 5.0), sp.random_points(rng, 200, 5.0)
                if np.min(sp.rauch_gap(x, y)) < -1e-9:
                    return False
        return True

    def sandwich():
        sp = Space(2, 1.0)
        return all(a <= b + 1e-6 and b <= c + 1e-6
                   for a, b, c in (lemma61_check(r) for r in dens.builtin_family(sp, cells=48)[::4]))

    def hls():
        hc = estimate_C0(2, cells=128)
        sp = Space(2, 1.0)
        return all(log_hls_deficit(r, hc) >= -1e-6 for r in dens.builtin_family(sp, cells=48)[::4])

    def pushforward():
        sp = Space(2, 1.0)
        return abs(pushforward_entropy_residual(dens.gaussian_like(sp, 0.6, cells=128))) < 1e-6

    def regimes():
        R = pot.Regime
        return (pot.classify_regime(pot.logarithmic(5.0), 2, 1, 1).tag == R.BLOW_UP
                and pot.classify_regime(pot.linear(0.5), 2, 1, 1).tag == R.SPREADING
                and pot.classify_regime(pot.linear(3.0), 2, 1, 1).tag == R.EXISTENCE_HOMOGENEOUS)

    def ball_spreads():
        scan = divergence_scan(Space(2, 1.0), pot.linear(0.5), np.geomspace(1e-2, 40.0, 10), cells=32)
        return scan.verdict == "SpreadDiverges"

    def steady_state():
        return fixed_point(initial_guess(Space(2, 1.0), 64), pot.linear(3.0)).converged

    return [("rauch_gap", rauch), ("pair_distance_sandwich", sandwich), ("log_hls", hls),
            ("pushforward_entropy", pushforward), ("regimes", regimes), ("ball_scan_spreading", ball_spreads),
            ("steady_state", steady_state)]


def cmd_selftest(cfg: Config, out: Path, args) -> tuple[int, list]:
    rows, ok = [], True
    for name, check in selftest_checks():
        passed = bool(check())
        ok &= passed
        rows.append([name, "pass" if passed else "fail"])
        print(f"{name}: {'pass' if passed else 'FAIL'}")
    _write_rows(out / "selftest.csv", ["check", "result"], rows)
    return EXIT_OK if ok else EXIT_VIOLATION, [out / "selftest.csv"]


COMMANDS = {
    "energy": cmd_energy,
    "ball-scan": cmd_ball_scan,
    "hls": cmd_hls,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "steady": cmd_steady,
    "phase": cmd_phase,
    "selftest": cmd_selftest,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: Config, outputs) -> None:
    resolved = cfg.resolved()
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(resolved.encode()).hexdigest(),
        "config": {s: dict(cfg.parser[s]) for s in cfg.parser.sections()},
        "seed": cfg.int("run", "seed"),
        "versions": {"hypfree": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _error_exit(exc: BaseException, code: int) -> int:
    line = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(line, sort_keys=True), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypfree", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps (default: 1)")
    p.add_argument("--dump-defaults", action="store_true", help="print the default configuration and exit")
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS), help="subcommand")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.dump_defaults:
        sys.stdout.write(dump_defaults())
        return EXIT_OK
    if args.command is None:
        return _error_exit(ConfigurationError("no subcommand given"), EXIT_CONFIG)
    if args.threads < 1:
        return _error_exit(ConfigurationError("--threads must be >= 1"), EXIT_CONFIG)
    try:
        cfg = Config.load(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code, produced = COMMANDS[args.command](cfg, out, args)
        write_manifest(out, args.command, cfg, produced)
        return code
    except (ConfigurationError, ClassificationInputError, DomainError, DegenerateInputError, BracketError) as exc:
        return _error_exit(exc, EXIT_CONFIG)
    except (NumericalDegeneracyError, IterationLimitError, InfeasibleError) as exc:
        return _error_exit(exc, EXIT_NUMERICAL)
    except HypfreeError as exc:
        return _error_exit(exc, EXIT_NUMERICAL)
    except (FloatingPointError, OverflowError) as exc:
        return _error_exit(exc, EXIT_NUMERICAL)


if __name__ == "__main__":
    sys.exit(main())
