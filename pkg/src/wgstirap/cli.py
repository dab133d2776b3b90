"""Command-line interface: ``wgstirap {spectrum,propagate,sweep,threshold,ep}``.

Every flag can also be given in a flat ``key = value`` config file
(``--config``); keys are the flag names with dashes or underscores, and
flags on the command line win. A JSON run manifest written by a previous
invocation is accepted as a config file too, which reruns it exactly.
"""
from __future__ import annotations

import argparse
import configparser
import contextlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (ThresholdRegimeError, gamma_cr_from_pnonad, gamma_cr_initial, gamma_cr_lz,
                       gamma_cr_semianalytic, nonadiabatic_probability, transfer_probability,
                       transfer_probability_adiabatic)
from .eigen import EigenError, align_path, instantaneous_frame
from .model import (ConfigError, ModelConfig, Site, coalescence_residual, ep3_location_mp,
                    ep3_locations, perturbative_imag_shifts)
from .propagate import (IntegratorSettings, StepFailureError, Variant, initial_state,
                        integrate_adiabatic_exact, integrate_bare,
                        integrate_reduced, project_adiabatic, reduced_vectors)
from .sweep import SweepError, SweepSpec, extract_boundary, run_sweep

log = logging.getLogger("wgstirap")

SPECTRUM_COLUMNS = ["z/L", "ReE-", "ReE0", "ReE+", "ImE-", "ImE0", "ImE+",
                    "pertImE-", "pertImE0", "pertImE+", "|phi0_1|^2", "|phi0_2|^2", "|phi0_3|^2"]
TRAJECTORY_COLUMNS = ["z", "Re c1", "Im c1", "Re c2", "Im c2", "Re c3", "Im c3", "norm2",
                      "|a-|^2", "|a0|^2", "|a+|^2"]
BOUNDARY_COLUMNS = ["L", "gamma_cr_numeric", "width", "gamma_cr_lz", "gamma_cr_semianalytic",
                    "gamma_cr_initial"]


class CliError(Exception):
    pass


def fmt(x) -> str:
    """Round-trip decimal formatting; empty for missing values."""
    if x is None:
        return ""
    return "%.17g" % x


# -- output staging ------------------------------------------------------------

class Outputs:
    """Collects output files under temporary names and renames them into place
    only when the command succeeds, so a failed run leaves no partial files."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self._pending = []

    def path(self, name: str) -> Path:
        final = self.dir / name
        tmp = final.with_name(f".{final.name}.{os.getpid()}.tmp")
        self._pending.append((tmp, final))
        return tmp

    @property
    def finals(self) -> list[str]:
        return [str(f) for _, f in self._pending]

    def commit(self):
        for tmp, final in self._pending:
            os.replace(tmp, final)

    def discard(self):
        for tmp, _ in self._pending:
            with contextlib.suppress(FileNotFoundError):
                tmp.unlink()


def write_csv(path: Path, header, rows):
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_matrix(path: Path, Ls, gammas, M):
    """Whitespace grid: first row is 'nan' then the gamma grid; each later row is L then values."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(" ".join(["nan"] + [fmt(g) for g in gammas]) + "\n")
        for L, row in zip(Ls, M):
            fh.write(" ".join([fmt(L)] + [fmt(x) for x in row]) + "\n")


def write_json(path: Path, obj):
    with path.open("w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


# -- argument handling ---------------------------------------------------------

def _site(text):
    try:
        return Site.parse(text)
    except (KeyError, ValueError):
        raise argparse.ArgumentTypeError(f"invalid site {text!r}; choose none, target, center or initial")


def _float_list(text):
    try:
        return [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _n_range(text):
    parts = str(text).replace("..", ":").split(":")
    try:
        if len(parts) == 1:
            n = int(parts[0])
            return (n, n)
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO:HI, got {text!r}")
    if hi < lo:
        raise argparse.ArgumentTypeError("n-range must have LO <= HI")
    return (lo, hi)


def _model_flags(p, gamma=True):
    p.add_argument("--a", type=float, required=True, help="coupling exponent a (>= 0)")
    p.add_argument("--L", type=float, required=True, help="device length L (> 0)")
    if gamma:
        p.add_argument("--gamma", type=float, default=0.0, help="absorption rate (default 0)")
        p.add_argument("--site", type=_site, default=Site.NONE,
                       help="absorbing waveguide: none, target, center or initial")


def _integrator_flags(p, samples=201):
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--abs-tol", type=float, default=1e-12)
    p.add_argument("--max-step", type=float, default=0.1, help="largest step as a fraction of L")
    p.add_argument("--samples", type=int, default=samples, help="output samples on [0, L]")


def _common(p):
    p.add_argument("--config", help="flat key = value file (or a previous run manifest)")
    p.add_argument("--out-dir", default=".", help="directory for output files (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgstirap", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="exact and perturbative energies along z")
    _common(p)
    _model_flags(p)
    p.add_argument("--samples", type=int, default=401)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("propagate", help="integrate one trajectory")
    _common(p)
    _model_flags(p)
    p.add_argument("--initial", choices=["dark", "basis3"], default="dark",
                   help="launch in the exact dark state (default) or in waveguide 3 alone")
    p.add_argument("--frame", choices=["bare", "adiabatic", "reduced"], default="bare")
    _integrator_flags(p)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("sweep", help="transfer probability on an (L, gamma) grid")
    _common(p)
    p.add_argument("--a", type=_float_list, default=[5.0], help="one or more a values, comma separated")
    p.add_argument("--site", type=_site, default=Site.TARGET)
    p.add_argument("--L-min", type=float, default=None)
    p.add_argument("--L-max", type=float, default=None)
    p.add_argument("--L-count", type=int, default=None)
    p.add_argument("--gamma-min", type=float, default=None)
    p.add_argument("--gamma-max", type=float, default=None)
    p.add_argument("--gamma-count", type=int, default=None)
    p.add_argument("--initial", choices=["dark", "basis3"], default="dark")
    p.add_argument("--outputs", default="P", help="comma list from P, P_nonad, norm")
    p.add_argument("--no-error-estimate", action="store_true",
                   help="skip the looser-tolerance rerun used for per-point error estimates")
    p.add_argument("--no-semianalytic", action="store_true",
                   help="omit the semianalytic boundary column (saves one integration per L)")
    p.add_argument("--max-points", type=int, default=1_000_000)
    p.add_argument("--threads", type=int, default=None, help="worker threads (env WGSTIRAP_THREADS)")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out-dir")
    _integrator_flags(p, samples=2)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("threshold", help="analytic and semianalytic critical absorption")
    _common(p)
    _model_flags(p, gamma=False)
    p.add_argument("--method", choices=["lz", "semianalytic", "initial"], required=True)
    p.add_argument("--pnonad", type=float, default=None, help="use this P_nonad (semianalytic)")
    p.add_argument("--measure-gamma", type=float, default=None,
                   help="measure P_nonad at this gamma (semianalytic)")
    p.add_argument("--frame", choices=["exact", "reduced"], default="exact",
                   help="frame used to measure P_nonad")
    _integrator_flags(p, samples=2)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("ep", help="exceptional points and coalescence residuals")
    _common(p)
    _model_flags(p, gamma=False)
    p.add_argument("--n-range", type=_n_range, default=(0, 0), help="branch indices N or LO:HI")
    p.add_argument("--probe", action="append", type=complex, default=[],
                   help="extra complex z at which to report the residual, e.g. 0.5+0.1j")
    p.add_argument("--dps", type=int, default=40, help="decimal digits for the residual")
    p.set_defaults(func=cmd_ep)
    return parser


def _load_config(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        data = json.loads(text)
        return {k: v for k, v in data.get("config", data).items()}
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string("[__root__]\n" + text)
    out = {}
    for section in cp.sections():
        out.update(cp[section])
    return out


_NOT_CONFIGURABLE = {"config", "command", "func", "help", "version"}


def _apply_config(sub: argparse.ArgumentParser, values: dict):
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.strip().replace("-", "_")
        if dest in _NOT_CONFIGURABLE:
            continue
        action = actions.get(dest)
        if action is None:
            raise CliError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            val = raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
        elif action.dest == "probe":
            val = [complex(x) for x in (raw if isinstance(raw, list) else str(raw).split())]
        elif isinstance(raw, list) and action.type is _n_range:
            val = tuple(raw)
        elif isinstance(raw, list):
            val = [float(x) for x in raw]
        elif raw is None:
            val = None
        elif action.type is not None:
            try:
                val = action.type(raw if not isinstance(raw, (int, float)) or action.type in (float, int)
                                  else str(raw))
            except (argparse.ArgumentTypeError, ValueError, TypeError) as exc:
                raise CliError(f"config key {key!r}: {exc}")
        else:
            val = raw
        if action.choices is not None and val not in action.choices:
            raise CliError(f"config key {key!r}: {val!r} not in {list(action.choices)}")
        defaults[dest] = val
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command = next((x for x in argv if not x.startswith("-") and x in _subparsers(parser)), None)
        if command is None:
            parser.error("--config requires a subcommand")
        try:
            values = _load_config(known.config)
        except (OSError, ValueError, configparser.Error) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        try:
            _apply_config(_subparsers(parser)[command], values)
        except CliError as exc:
            parser.error(str(exc))
    return parser.parse_args(argv)


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _config_echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "config", "verbose"):
            continue
        if isinstance(v, Site):
            v = v.name.lower()
        elif isinstance(v, complex):
            v = str(v)
        elif isinstance(v, tuple):
            v = list(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, complex) else x for x in v]
        out[k] = v
    return out


def _settings(args) -> IntegratorSettings:
    return IntegratorSettings(rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_step=args.max_step,
                              sample_count=args.samples)


def _model(args) -> ModelConfig:
    return ModelConfig(args.a, args.L, getattr(args, "gamma", 0.0), getattr(args, "site", Site.NONE))


# -- commands ------------------------------------------------------------------

def cmd_spectrum(args, out: Outputs) -> dict:
    cfg = _model(args)
    if args.samples < 2:
        raise ConfigError("--samples must be at least 2")
    zs = np.linspace(0.0, cfg.L, args.samples)
    path = align_path(cfg, zs)
    side, mid, _ = perturbative_imag_shifts(zs, cfg)
    side = np.broadcast_to(side, zs.shape)
    mid = np.broadcast_to(mid, zs.shape)
    rows = []
    for k, z in enumerate(zs):
        E = path.energies[k]
        d = np.abs(path.vectors[k, 1]) ** 2
        rows.append([z / cfg.L, E[0].real, E[1].real, E[2].real, E[0].imag, E[1].imag, E[2].imag,
                     side[k], mid[k], side[k], d[0], d[1], d[2]])
    write_csv(out.path("spectrum.csv"), SPECTRUM_COLUMNS, rows)
    return {"samples": int(zs.size)}


def cmd_propagate(args, out: Outputs) -> dict:
    cfg = _model(args)
    settings = _settings(args)
    psi0 = initial_state(cfg, args.initial)
    if args.frame == "bare":
        traj = project_adiabatic(integrate_bare(cfg, psi0, settings))
    elif args.frame == "adiabatic":
        c0 = (0, 1, 0) if args.initial == "dark" else instantaneous_frame(0.0, cfg).vectors @ psi0
        traj = integrate_adiabatic_exact(cfg, c0, settings)
    else:
        c0 = (0, 1, 0) if args.initial == "dark" else reduced_vectors(0.0, cfg) @ psi0
        traj = integrate_reduced(cfg, Variant.for_site(cfg), settings, initial_coeffs=c0)
    rows = []
    for z, psi, n2, c in zip(traj.zs, traj.states, traj.norms, traj.coeffs):
        a2 = np.abs(c) ** 2
        rows.append([z, psi[0].real, psi[0].imag, psi[1].real, psi[1].imag, psi[2].real,
                     psi[2].imag, n2, a2[0], a2[1], a2[2]])
    write_csv(out.path("trajectory.csv"), TRAJECTORY_COLUMNS, rows)
    summary = dict(P=transfer_probability(traj.final_state),
                   P_adiabatic=transfer_probability_adiabatic(traj.final_coeffs),
                   P_nonad=nonadiabatic_probability(traj.final_coeffs),
                   final_norm=float(traj.norms[-1]), frame=traj.frame,
                   initial=args.initial, stats=traj.stats)
    write_json(out.path("summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    return dict(traj.stats)


def _sweep_spec(args) -> SweepSpec:
    defaults = {Site.INITIAL: ((10.0, 120.0, 120), (0.0, 1.5, 150))}
    Ld, gd = defaults.get(args.site, ((5.0, 60.0, 120), (0.0, 0.6, 120)))

    def pick(vals, dflt):
        return tuple(d if v is None else v for v, d in zip(vals, dflt))

    return SweepSpec(
        a_values=tuple(args.a),
        L_range=pick((args.L_min, args.L_max, args.L_count), Ld),
        gamma_range=pick((args.gamma_min, args.gamma_max, args.gamma_count), gd),
        site=args.site, initial=args.initial,
        settings=_settings(args),
        outputs=frozenset(x.strip() for x in args.outputs.split(",") if x.strip()),
        error_estimate=not args.no_error_estimate, max_points=args.max_points)


def _tag(a):
    return ("%g" % a).replace(".", "p")


def cmd_sweep(args, out: Outputs) -> dict:
    spec = _sweep_spec(args)
    out.dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out.dir / "checkpoint.csv"

    def progress(ai, li):
        log.info("a=%g: finished L row %d/%d", spec.a_values[ai], li + 1, spec.L_range[2])

    diagram = run_sweep(spec, checkpoint=checkpoint, resume=args.resume, threads=args.threads,
                        progress=progress)
    omitted = {}
    settings = IntegratorSettings(rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_step=args.max_step,
                                  sample_count=2)
    for ai, a in enumerate(spec.a_values):
        tag = _tag(a)
        write_matrix(out.path(f"matrix_a{tag}.txt"), diagram.Ls, diagram.gammas, diagram.P[ai])
        if diagram.P_nonad is not None:
            write_matrix(out.path(f"pnonad_a{tag}.txt"), diagram.Ls, diagram.gammas, diagram.P_nonad[ai])
        if diagram.norm is not None:
            write_matrix(out.path(f"norm_a{tag}.txt"), diagram.Ls, diagram.gammas, diagram.norm[ai])
        bnd = extract_boundary(diagram, ai, semianalytic=not args.no_semianalytic, settings=settings)
        omitted[tag] = bnd.omitted
        rows = [[p.L, p.numeric.gamma_cr, p.numeric.width,
                 p.lz and p.lz.gamma_cr, p.semianalytic and p.semianalytic.gamma_cr,
                 p.initial and p.initial.gamma_cr] for p in bnd.points]
        write_csv(out.path(f"boundary_a{tag}.csv"), BOUNDARY_COLUMNS, rows)
    return dict(points=int(diagram.P.size), failed=len(diagram.failures),
                total_steps=int(diagram.steps.sum()), max_error_estimate=_nanmax(diagram.err),
                columns_without_crossing=omitted, checkpoint=str(checkpoint))


def _nanmax(x):
    return float(np.nanmax(x)) if np.any(np.isfinite(x)) else None


def cmd_threshold(args, out: Outputs) -> dict:
    if args.method == "lz":
        est = gamma_cr_lz(args.a, args.L)
    elif args.method == "initial":
        est = gamma_cr_initial(args.a, args.L)
    else:
        if (args.pnonad is None) == (args.measure_gamma is None):
            raise CliError("semianalytic needs exactly one of --pnonad or --measure-gamma")
        if args.pnonad is not None:
            est = gamma_cr_from_pnonad(args.pnonad, args.L, a=args.a)
        else:
            est = gamma_cr_semianalytic(args.a, args.L, args.measure_gamma, Site.TARGET, args.frame,
                                        _settings(args))
    result = est.as_dict()
    print(json.dumps(result, sort_keys=True))
    return result


def cmd_ep(args, out: Outputs) -> dict:
    cfg = ModelConfig(args.a, args.L)
    lo, hi = args.n_range
    points = []
    for loc in ep3_locations(cfg, lo, hi):
        res = coalescence_residual(ep3_location_mp(cfg, loc.n, args.dps), cfg, args.dps)
        points.append(dict(n=loc.n, re_z=loc.z.real, im_z=loc.z.imag, residual=res))
    probes = [dict(re_z=z.real, im_z=z.imag, residual=coalescence_residual(z, cfg, args.dps))
              for z in args.probe]
    result = dict(a=args.a, L=args.L, exceptional_points=points, probes=probes)
    print(json.dumps(result, sort_keys=True))
    return result


# -- entry point ---------------------------------------------------------------

def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    out = Outputs(args.out_dir)
    t0 = time.perf_counter()
    try:
        if args.command != "sweep" and not out.dir.is_dir():
            out.dir.mkdir(parents=True, exist_ok=True)
        stats = args.func(args, out)
        manifest_path = out.path(f"{args.command}.manifest.json")
        manifest = dict(tool="wgstirap", version=__version__, command=args.command,
                        config=_config_echo(args),
                        inputs=[args.config] if args.config else [],
                        outputs=out.finals,
                        wall_seconds=time.perf_counter() - t0,
                        stats=stats)
        write_json(manifest_path, manifest)
        out.commit()
    except (ConfigError, ThresholdRegimeError, CliError, EigenError, StepFailureError,
            SweepError, OSError) as exc:
        out.discard()
        print(f"wgstirap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.discard()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
