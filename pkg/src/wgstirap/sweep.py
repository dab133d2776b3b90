"""Parameter sweeps over (L, gamma) grids and nonadiabatic-probability scans.

Each grid point is an independent bare-basis integration, so points are
farmed out to a thread pool (the compiled integrator releases the GIL) and
merged by index. Finished L-rows are appended to a checkpoint CSV by the
calling thread only, which makes interrupted sweeps resumable.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (NoCrossingError, ThresholdEstimate, ThresholdRegimeError,
                       gamma_cr_initial, gamma_cr_lz, gamma_cr_semianalytic, lz_estimate,
                       nonadiabatic_probability, threshold_from_sweep, transfer_probability)
from .eigen import EigenError, instantaneous_frame
from .model import ConfigError, ModelConfig, Site
from .propagate import (IntegratorSettings, StepFailureError, integrate_adiabatic_exact,
                        integrate_bare, integrate_reduced)

log = logging.getLogger(__name__)

MAX_HOLE_FRACTION = 0.01
CHECKPOINT_HEADER = ["li", "gi", "L", "gamma", "P", "flags"]
OUTPUTS = frozenset({"P", "P_nonad", "norm"})


class SweepError(RuntimeError):
    def __init__(self, message, diagram=None):
        super().__init__(message)
        self.diagram = diagram


class CheckpointMismatchError(SweepError):
    pass


def thread_count() -> int:
    env = os.environ.get("WGSTIRAP_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ConfigError("WGSTIRAP_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SweepSpec:
    """Grid definition. ``L_range`` and ``gamma_range`` are (min, max, count) for linspace."""

    a_values: tuple = (5.0,)
    L_range: tuple = (5.0, 60.0, 120)
    gamma_range: tuple = (0.0, 0.6, 120)
    site: Site = Site.TARGET
    initial: str = "dark"
    settings: IntegratorSettings = field(default_factory=lambda: IntegratorSettings(sample_count=2))
    outputs: frozenset = frozenset({"P"})
    error_estimate: bool = True
    max_points: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "site", Site.parse(self.site))
        object.__setattr__(self, "a_values", tuple(float(a) for a in np.atleast_1d(self.a_values)))
        object.__setattr__(self, "outputs", frozenset(self.outputs) | {"P"})
        if not self.a_values or any(a < 0 or not math.isfinite(a) for a in self.a_values):
            raise ConfigError("a_values must be a non-empty list of finite values >= 0")
        for name, lo_ok in (("L_range", lambda x: x > 0), ("gamma_range", lambda x: x >= 0)):
            lo, hi, n = getattr(self, name)
            if int(n) != n or n < 2:
                raise ConfigError(f"{name} count must be an integer >= 2")
            if not (lo_ok(lo) and hi > lo and math.isfinite(hi)):
                raise ConfigError(f"{name} must satisfy min < max with a valid minimum, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi), int(n)))
        if self.initial not in ("dark", "basis3"):
            raise ConfigError(f"initial must be 'dark' or 'basis3', got {self.initial!r}")
        unknown = self.outputs - OUTPUTS
        if unknown:
            raise ConfigError(f"unknown outputs {sorted(unknown)}")
        if self.n_points > self.max_points:
            raise ConfigError(f"{self.n_points} grid points exceed the cap of {self.max_points}")

    @property
    def Ls(self) -> np.ndarray:
        return np.linspace(*self.L_range)

    @property
    def gammas(self) -> np.ndarray:
        return np.linspace(*self.gamma_range)

    @property
    def n_points(self) -> int:
        return len(self.a_values) * self.L_range[2] * self.gamma_range[2]

    def as_dict(self) -> dict:
        s = self.settings
        return dict(a_values=list(self.a_values), L_range=list(self.L_range),
                    gamma_range=list(self.gamma_range), site=self.site.name.lower(),
                    initial=self.initial, outputs=sorted(self.outputs),
                    error_estimate=self.error_estimate, max_points=self.max_points,
                    rel_tol=s.rel_tol, abs_tol=s.abs_tol, max_step=s.max_step)


@dataclass
class PhaseDiagram:
    """Sweep results; arrays are indexed (a index, L index, gamma index).

    ``err`` is |P - P_loose| with P_loose from a rerun at 10x looser tolerances
    (NaN when error estimation is off), ``steps`` the accepted step count.
    Holes (failed points) are NaN in ``P`` with the reason in ``failures``.
    """

    spec: SweepSpec
    P: np.ndarray
    steps: np.ndarray
    err: np.ndarray
    P_nonad: np.ndarray | None = None
    norm: np.ndarray | None = None
    failures: dict = field(default_factory=dict)

    @property
    def Ls(self) -> np.ndarray:
        return self.spec.Ls

    @property
    def gammas(self) -> np.ndarray:
        return self.spec.gammas

    @property
    def hole_fraction(self) -> float:
        return float(np.mean(~np.isfinite(self.P)))


@dataclass(frozen=True)
class PointResult:
    P: float
    steps: int
    err: float
    P_nonad: float = math.nan
    norm: float = math.nan
    status: str = "ok"


def evaluate_point(cfg: ModelConfig, spec: SweepSpec) -> PointResult:
    """Transfer probability (and optional extras) at one grid point."""
    zs = np.array([0.0, cfg.L])
    try:
        traj = integrate_bare(cfg, spec.initial, spec.settings, zs=zs)
        psi = traj.final_state
        P = transfer_probability(psi)
        err = math.nan
        if spec.error_estimate:
            loose = spec.settings.replace(rel_tol=min(spec.settings.rel_tol * 10, 1e-3),
                                          abs_tol=min(spec.settings.abs_tol * 10, 1e-3))
            err = abs(P - transfer_probability(integrate_bare(cfg, spec.initial, loose, zs=zs).final_state))
        pn = math.nan
        if "P_nonad" in spec.outputs:
            coeffs = instantaneous_frame(cfg.L, cfg).vectors @ psi
            pn = nonadiabatic_probability(coeffs)
        return PointResult(P=P, steps=traj.stats["accepted"], err=err, P_nonad=pn,
                           norm=float(traj.norms[-1]))
    except (StepFailureError, EigenError, ArithmeticError) as exc:
        return PointResult(P=math.nan, steps=0, err=math.nan, status=type(exc).__name__)


def _flags(r: PointResult) -> str:
    return f"status={r.status};steps={r.steps};err={r.err:.3g}"


def _parse_flags(text: str) -> dict:
    out = {}
    for item in text.split(";"):
        if "=" in item:
            k, v = item.split("=", 1)
            out[k] = v
    return out


def checkpoint_paths(checkpoint, spec: SweepSpec) -> list[Path]:
    """One checkpoint file per a value; a suffix ``.a<k>`` is added when there are several."""
    base = Path(checkpoint)
    if len(spec.a_values) == 1:
        return [base]
    return [base.with_name(f"{base.stem}.a{k}{base.suffix}") for k in range(len(spec.a_values))]


def _read_checkpoint(path: Path, spec: SweepSpec):
    rows = {}
    if not path.exists():
        return rows
    Ls, gs = spec.Ls, spec.gammas
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CHECKPOINT_HEADER:
            raise CheckpointMismatchError(f"{path}: unexpected header {header}")
        for rec in reader:
            if len(rec) != 6:
                continue  # torn final line from an interrupted write
            li, gi = int(rec[0]), int(rec[1])
            L, g = float(rec[2]), float(rec[3])
            if li >= Ls.size or gi >= gs.size or L != Ls[li] or g != gs[gi]:
                raise CheckpointMismatchError(
                    f"{path}: row ({li}, {gi}) at L={L}, gamma={g} does not match the sweep grid")
            flags = _parse_flags(rec[5])
            rows[(li, gi)] = PointResult(P=float(rec[4]), steps=int(flags.get("steps", 0)),
                                         err=float(flags.get("err", "nan")),
                                         status=flags.get("status", "ok"))
    return rows


def _complete_rows(rows, n_gamma):
    counts = {}
    for li, _ in rows:
        counts[li] = counts.get(li, 0) + 1
    return {li for li, n in counts.items() if n == n_gamma}


def run_sweep(spec: SweepSpec, checkpoint=None, resume: bool = False,
              threads: int | None = None, progress=None) -> PhaseDiagram:
    """Evaluate the transfer probability on the full grid.

    With ``checkpoint`` set, each finished L-row is appended to that CSV
    (``li,gi,L,gamma,P,flags``). ``resume=True`` keeps rows already present
    and computes only the missing ones; without it the file is started
    afresh. Raises :class:`SweepError` (diagram attached) when more than 1%
    of the points failed.
    """
    threads = threads or thread_count()
    Ls, gs = spec.Ls, spec.gammas
    shape = (len(spec.a_values), Ls.size, gs.size)
    P = np.full(shape, np.nan)
    steps = np.zeros(shape, dtype=np.int64)
    err = np.full(shape, np.nan)
    pn = np.full(shape, np.nan) if "P_nonad" in spec.outputs else None
    norm = np.full(shape, np.nan) if "norm" in spec.outputs else None
    failures = {}
    paths = checkpoint_paths(checkpoint, spec) if checkpoint else [None] * len(spec.a_values)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for ai, a in enumerate(spec.a_values):
            path = paths[ai]
            done = {}
            if path is not None and resume:
                done = _read_checkpoint(path, spec)
            skip = _complete_rows(done, gs.size) if not (pn is not None or norm is not None) else set()
            fh = writer = None
            if path is not None:
                fresh = not (resume and path.exists())
                if not fresh and skip != {li for li, _ in done}:
                    # drop partial rows so the file holds whole rows only
                    keep = [(k, r) for k, r in sorted(done.items()) if k[0] in skip]
                    _rewrite(path, keep, Ls, gs)
                elif fresh:
                    _rewrite(path, [], Ls, gs)
                fh = path.open("a", newline="")
                writer = csv.writer(fh, lineterminator="\n")
            try:
                for li, L in enumerate(Ls):
                    if li in skip:
                        results = [done[(li, gi)] for gi in range(gs.size)]
                    else:
                        cfgs = [ModelConfig(a, L, g, spec.site) for g in gs]
                        results = list(pool.map(lambda c: evaluate_point(c, spec), cfgs))
                        if writer is not None:
                            for gi, r in enumerate(results):
                                writer.writerow([li, gi, repr(float(L)), repr(float(gs[gi])),
                                                 repr(r.P), _flags(r)])
                            fh.flush()
                            os.fsync(fh.fileno())
                    for gi, r in enumerate(results):
                        P[ai, li, gi] = r.P
                        steps[ai, li, gi] = r.steps
                        err[ai, li, gi] = r.err
                        if pn is not None:
                            pn[ai, li, gi] = r.P_nonad
                        if norm is not None:
                            norm[ai, li, gi] = r.norm
                        if r.status != "ok":
                            failures[(ai, li, gi)] = r.status
                    if progress is not None:
                        progress(ai, li)
            finally:
                if fh is not None:
                    fh.close()

    diagram = PhaseDiagram(spec=spec, P=P, steps=steps, err=err, P_nonad=pn, norm=norm,
                           failures=failures)
    if failures:
        log.warning("%d of %d sweep points failed", len(failures), P.size)
    if diagram.hole_fraction > MAX_HOLE_FRACTION:
        raise SweepError(f"{diagram.hole_fraction:.2%} of points failed (limit 1%)", diagram)
    return diagram


def _rewrite(path: Path, rows, Ls, gs):
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHECKPOINT_HEADER)
        for (li, gi), r in rows:
            w.writerow([li, gi, repr(float(Ls[li])), repr(float(gs[gi])), repr(r.P), _flags(r)])
    os.replace(tmp, path)


# -- boundaries ----------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryPoint:
    """Extracted and analytic thresholds at one L; analytic entries are None where not applicable."""

    L: float
    numeric: ThresholdEstimate
    lz: ThresholdEstimate | None = None
    semianalytic: ThresholdEstimate | None = None
    initial: ThresholdEstimate | None = None


@dataclass
class Boundary:
    a: float
    points: list
    omitted: list  # L values without a crossing

    @property
    def n_omitted(self) -> int:
        return len(self.omitted)


def _maybe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ThresholdRegimeError, ConfigError):
        return None


def extract_boundary(diagram: PhaseDiagram, a_index: int = 0, semianalytic: bool = True,
                     measure_gamma: float = 0.2,
                     settings: IntegratorSettings | None = None) -> Boundary:
    """Per-L thresholds of one a-slice with the matching analytic curves.

    Landau-Zener and semianalytic estimates are attached for target-site
    diagrams, the initial-site formula for initial-site diagrams.
    """
    spec = diagram.spec
    a = spec.a_values[a_index]
    points, omitted = [], []
    for L in diagram.Ls:
        try:
            num = threshold_from_sweep(diagram, float(L), a_index)
        except NoCrossingError:
            omitted.append(float(L))
            continue
        lz = semi = init = None
        if spec.site == Site.TARGET:
            lz = _maybe(gamma_cr_lz, a, float(L))
            if semianalytic:
                semi = _maybe(gamma_cr_semianalytic, a, float(L), measure_gamma, Site.TARGET,
                              settings=settings)
        elif spec.site == Site.INITIAL:
            init = _maybe(gamma_cr_initial, a, float(L))
        points.append(BoundaryPoint(float(L), num, lz, semi, init))
    return Boundary(a=a, points=points, omitted=omitted)


# -- nonadiabatic scans --------------------------------------------------------

@dataclass(frozen=True)
class PnonadRow:
    L: float
    p_nonad: float
    p_nonad_summed: float
    lz: float


def scan_pnonad(a: float, gamma: float, Ls, site: Site = Site.TARGET, frame: str = "exact",
                settings: IntegratorSettings | None = None,
                threads: int | None = None) -> list[PnonadRow]:
    """Final nonadiabatic probability versus L, starting from a0 = 1.

    ``frame`` is ``"exact"`` (exact adiabatic frame) or ``"reduced"``. The
    Landau-Zener estimate is included per row for overlay.
    """
    site = Site.parse(site) if gamma > 0 else Site.NONE
    settings = settings or IntegratorSettings(sample_count=2)

    def one(L):
        cfg = ModelConfig(a, L, gamma, site)
        zs = np.array([0.0, L])
        if frame == "exact":
            tr = integrate_adiabatic_exact(cfg, settings=settings, zs=zs)
        elif frame == "reduced":
            tr = integrate_reduced(cfg, settings=settings, zs=zs)
        else:
            raise ValueError(f"frame must be 'exact' or 'reduced', got {frame!r}")
        c = tr.final_coeffs
        return PnonadRow(float(L), nonadiabatic_probability(c), nonadiabatic_probability(c, "summed"),
                         lz_estimate(a, L) if a > 0 else math.nan)

    with ThreadPoolExecutor(max_workers=threads or thread_count()) as pool:
        return list(pool.map(one, [float(L) for L in Ls]))


def fit_log_slope(rows, L_min: float, L_max: float) -> float:
    """Least-squares slope of ln P_nonad against L on [L_min, L_max]."""
    sel = [(r.L, r.p_nonad) for r in rows if L_min <= r.L <= L_max and r.p_nonad > 0]
    if len(sel) < 2:
        raise ValueError("need at least two positive samples in the fit window")
    L, p = np.array(sel).T
    return float(np.polyfit(L, np.log(p), 1)[0])
