import math

import numpy as np
import pytest

import wgstirap.sweep as sw
from wgstirap.model import ConfigError, Site
from wgstirap.sweep import (CheckpointMismatchError, PointResult, SweepError, SweepSpec,
                            checkpoint_paths, extract_boundary, fit_log_slope, run_sweep,
                            scan_pnonad, thread_count)

SMALL = SweepSpec(a_values=(5.0,), L_range=(10.0, 20.0, 3), gamma_range=(0.0, 0.6, 7),
                  error_estimate=False)


class TestSpec:
    @pytest.mark.parametrize("kw", [dict(L_range=(0, 10, 3)), dict(L_range=(10, 5, 3)),
                                    dict(gamma_range=(0, 1, 1)), dict(gamma_range=(-1, 1, 3)),
                                    dict(a_values=()), dict(initial="left"), dict(outputs={"foo"}),
                                    dict(max_points=10)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SweepSpec(**kw)

    def test_defaults(self):
        s = SweepSpec()
        assert s.n_points == 120 * 120 and s.site is Site.TARGET
        assert s.Ls[0] == 5 and s.Ls[-1] == 60 and s.gammas[-1] == 0.6
        assert "P" in s.outputs and s.as_dict()["site"] == "target"


def test_single_point():
    spec = SweepSpec(L_range=(20.0, 21.0, 2), gamma_range=(0.0, 0.01, 2))
    d = run_sweep(spec, threads=1)
    assert d.P.shape == (1, 2, 2)
    assert d.P[0, 0, 0] > 0.99
    assert np.all(d.steps > 0) and np.all(np.isfinite(d.err)) and np.all(d.err < 1e-6)


def test_values_and_optional_outputs():
    spec = SweepSpec(a_values=(5.0,), L_range=(20.0, 40.0, 2), gamma_range=(0.0, 0.6, 3),
                     outputs={"P_nonad", "norm"}, error_estimate=False)
    d = run_sweep(spec, threads=1)
    assert np.all((d.P >= 0) & (d.P <= 1))
    assert d.P[0, 0, 0] > 0.99 and d.P[0, 1, -1] < 0.01  # adiabatic below, blocked above
    assert np.all(d.norm <= 1 + 1e-9) and np.all(d.P_nonad >= 0)
    assert d.hole_fraction == 0


def test_determinism_across_thread_counts():
    d1 = run_sweep(SMALL, threads=1)
    d2 = run_sweep(SMALL, threads=3)
    assert np.array_equal(d1.P, d2.P)


def test_checkpoint_and_resume(tmp_path):
    ck = tmp_path / "ck.csv"
    ref = run_sweep(SMALL, checkpoint=ck, threads=1)
    lines = ck.read_text().splitlines()
    assert lines[0] == "li,gi,L,gamma,P,flags"
    assert len(lines) == 1 + 3 * 7
    # simulate an interrupt: one full row, part of the next and a torn line
    ck.write_text("\n".join(lines[:1 + 7 + 3]) + "\n2,0,20.0\n")
    calls = []
    res = run_sweep(SMALL, checkpoint=ck, resume=True, threads=1, progress=lambda a, l: calls.append(l))
    assert np.array_equal(ref.P, res.P)
    assert calls == [0, 1, 2]
    assert len(ck.read_text().splitlines()) == 1 + 3 * 7


def test_checkpoint_mismatch(tmp_path):
    ck = tmp_path / "ck.csv"
    run_sweep(SMALL, checkpoint=ck, threads=1)
    other = SweepSpec(a_values=(5.0,), L_range=(10.0, 30.0, 3), gamma_range=(0.0, 0.6, 7),
                      error_estimate=False)
    with pytest.raises(CheckpointMismatchError):
        run_sweep(other, checkpoint=ck, resume=True, threads=1)
    ck.write_text("x,y\n")
    with pytest.raises(CheckpointMismatchError):
        run_sweep(SMALL, checkpoint=ck, resume=True, threads=1)


def test_checkpoint_paths_per_a(tmp_path):
    spec = SweepSpec(a_values=(5, 8), L_range=(10.0, 20.0, 2), gamma_range=(0.0, 0.6, 2))
    assert [p.name for p in checkpoint_paths(tmp_path / "ck.csv", spec)] == ["ck.a0.csv", "ck.a1.csv"]


def test_hole_limit(monkeypatch):
    real = sw.evaluate_point

    def flaky(cfg, spec):
        if cfg.gamma == spec.gammas[3] and cfg.L == spec.Ls[1]:
            return PointResult(P=math.nan, steps=0, err=math.nan, status="StepFailureError")
        return real(cfg, spec)
    monkeypatch.setattr(sw, "evaluate_point", flaky)
    with pytest.raises(SweepError) as info:
        run_sweep(SMALL, threads=1)
    d = info.value.diagram
    assert d.failures == {(0, 1, 3): "StepFailureError"}
    assert d.hole_fraction == pytest.approx(1 / 21)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("WGSTIRAP_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("WGSTIRAP_THREADS", "0")
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.delenv("WGSTIRAP_THREADS")
    assert thread_count() >= 1


def test_extract_boundary_target():
    spec = SweepSpec(a_values=(5.0,), L_range=(5.0, 25.0, 3), gamma_range=(0.0, 0.6, 31),
                     error_estimate=False)
    b = extract_boundary(run_sweep(spec, threads=1), semianalytic=True)
    assert b.a == 5.0
    # at L = 5 P falls below 0.5 right away or never: no adiabatic region there
    Ls = [p.L for p in b.points] + b.omitted
    assert sorted(Ls) == [5.0, 15.0, 25.0]
    for p in b.points:
        if p.L >= 15:
            assert p.lz is not None and p.semianalytic is not None and p.initial is None
            assert abs(p.numeric.gamma_cr - p.semianalytic.gamma_cr) < 0.05


def test_extract_boundary_omits_columns_without_crossing():
    spec = SweepSpec(a_values=(5.0,), L_range=(20.0, 30.0, 2), gamma_range=(0.0, 0.1, 3),
                     error_estimate=False)
    b = extract_boundary(run_sweep(spec, threads=1), semianalytic=False)
    assert b.points == [] and b.n_omitted == 2


def test_scan_pnonad_and_slope():
    rows = scan_pnonad(5.0, 0.0, np.arange(4.0, 13.0), threads=1)
    assert [r.L for r in rows] == list(np.arange(4.0, 13.0))
    for r in rows:
        assert r.p_nonad_summed == pytest.approx(2 * r.p_nonad)
        assert 0 < r.p_nonad < 0.5 and 0 < r.lz < 1
    slope = fit_log_slope(rows, 4, 12)
    assert -0.4 < slope < -0.25
    with pytest.raises(ValueError):
        fit_log_slope(rows, 100, 200)


def test_scan_pnonad_smoothing_with_absorption():
    Ls = np.linspace(15, 40, 26)
    p0 = np.array([r.p_nonad for r in scan_pnonad(5.0, 0.0, Ls, threads=1)])
    p1 = np.array([r.p_nonad for r in scan_pnonad(5.0, 0.25, Ls, threads=1)])
    # oscillations in ln P_nonad are weaker with absorption
    rough = lambda p: np.std(np.diff(np.log(p), 2))
    assert rough(p1) < rough(p0)
