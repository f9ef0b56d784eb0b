"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; every tolerance and time budget is asserted, not just reported.
"""

import json
import math
import time

import numpy as np
import pytest

import dichokit as dk
from dichokit.cli import main as cli_main
from conftest import FOUR_BLOCK

SEED = 0x5EED


def _passline(k, text):
    print(f"\nACCEPTANCE {k} PASS: {text}")


def test_criterion_1_projector_oracle_equivalence():
    t0 = time.monotonic()
    systems = [
        dk.builtin("const_diag", {"diag": (-1.0, 1.0)}),
        dk.builtin("const_full", {"matrix": [[0.0, 1.0], [1.0, 0.0]]}),
        dk.constant_system(FOUR_BLOCK, name="four_block"),
    ]
    grid = dk.make_grid(-8.0, 8.0, 0.01)
    worst = 0.0
    for sys in systems:
        cache = dk.propagate(sys, grid)
        window = dk.window_projector(cache)
        spectral = dk.spectral_projector(sys, grid)
        assert window.is_dichotomic and spectral.is_dichotomic
        diff = np.linalg.norm(window.P - spectral.P, 2)
        assert diff <= 1e-6, f"{sys.name}: projector mismatch {diff:.3g}"
        worst = max(worst, diff)
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"runtime {elapsed:.1f}s exceeds 10s"
    _passline(1, f"window vs spectral projections agree to {worst:.2e} "
                 f"on 3 constant systems in {elapsed:.1f}s")


def test_criterion_2_green_bound():
    t0 = time.monotonic()
    sys = dk.builtin("const_diag", {"diag": (-1.0, 1.0)})
    grid = dk.make_grid(-10.0, 10.0, 0.005)
    cache = dk.propagate(sys, grid)
    report = dk.window_projector(cache)
    bound = report.inverse_norm_bound()
    assert bound == pytest.approx(2.0, abs=0.05)

    f = dk.make_forcing(lambda t: np.array([1.0, 1.0]), grid)
    sol = dk.green_solve(cache, report, f)
    u_inf = float(np.max(np.abs(sol.u)))
    assert abs(u_inf - 1.0) <= 1e-3

    rng = np.random.default_rng(SEED)
    for _ in range(50):
        c = rng.standard_normal((3, 2))
        w = rng.uniform(0.2, 2.0, 2)
        phase = rng.uniform(0.0, 2.0 * math.pi)

        def smooth(t, _c=c, _w=w, _p=phase):
            return _c[0] + _c[1] * math.sin(_w[0] * t + _p) + _c[2] * math.cos(_w[1] * t)

        sol_k = dk.green_solve(cache, report, dk.make_forcing(smooth, grid))
        ib = dk.check_inverse_bound(sol_k, report)
        assert ib.passed and ib.ratio <= ib.bound + 1e-9
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds 60s"
    _passline(2, f"||u||={u_inf:.6f} vs bound {bound:.3f}; 50 random forcings "
                 f"within the bound in {elapsed:.1f}s")


def test_criterion_3_closed_form_solve():
    sys = dk.builtin("const_diag", {"diag": (-1.0, 1.0)})
    residual_sup = {}
    worst = None
    for h in (0.01, 0.005):
        grid = dk.make_grid(-13.0, 13.0, h)
        cache = dk.propagate(sys, grid)
        report = dk.window_projector(cache)
        f = dk.make_forcing(lambda t: np.array([math.cos(t), 0.0]), grid)
        sol = dk.green_solve(cache, report, f)
        residual_sup[h] = sol.residual_sup
        inner = np.abs(grid.points) <= 5.0
        truth = 0.5 * (np.cos(grid.points) + np.sin(grid.points))
        err = float(np.max(np.abs(sol.u[inner, 0] - truth[inner])))
        assert err <= 1e-3, f"h={h}: closed-form error {err:.3g}"
        if worst is None:
            worst = err
    ratio = residual_sup[0.01] / residual_sup[0.005]
    assert ratio >= 3.5, f"residual halving ratio {ratio:.2f} < 3.5"
    _passline(3, f"cosine response matches closed form to {worst:.2e} on [-5,5]; "
                 f"halving h cuts the residual by {ratio:.2f}x")


def test_criterion_4_roughness_suite():
    t0 = time.monotonic()
    grid = dk.make_grid(-8.0, 8.0, 0.01)
    systems = [
        dk.builtin("const_diag", {"diag": (-1.0, 1.0)}),
        dk.builtin("rotating_hyperbolic", {"omega": 0.1}),
        dk.builtin("periodic_hyperbolic"),
    ]
    runs = 0
    for sys_idx, sys in enumerate(systems):
        base = dk.analyze_system(sys, grid, escalate=False, seed=SEED)
        assert base.report.is_dichotomic
        thr = dk.threshold(base.report)
        rng = np.random.default_rng(SEED + sys_idx)
        for k in range(20):
            target = 0.9 * thr * float(rng.uniform(0.05, 1.0))
            spec = dk.random_perturbation(sys.dim, grid, target,
                                          seed=1000 * sys_idx + k)
            rep = dk.perturb_and_verify(sys, spec, grid, base=base, seed=SEED)
            assert rep.admissible
            assert rep.perturbed.is_dichotomic
            assert rep.perturbed_inv_bound >= base.report.inverse_norm_bound()
            runs += 1
    elapsed = time.monotonic() - t0
    assert runs == 60
    assert elapsed < 300.0, f"runtime {elapsed:.1f}s exceeds 5min"
    _passline(4, f"60/60 admissible perturbations certified dichotomic in {elapsed:.0f}s")


def test_criterion_5_constructive_splitting():
    grid = dk.make_grid(-8.0, 8.0, 0.001)
    systems = [
        dk.builtin("const_diag", {"diag": (-1.0, 1.0)}),
        dk.builtin("const_full", {"matrix": [[0.0, 1.0], [1.0, 0.0]]}),
        dk.builtin("rotating_hyperbolic", {"omega": 0.1}),
        dk.builtin("periodic_hyperbolic"),
    ]
    worst = 0.0
    rng = np.random.default_rng(SEED)
    for sys in systems:
        cache = dk.propagate(sys, grid)
        report = dk.window_projector(cache)
        assert report.is_dichotomic
        q = np.eye(sys.dim) - report.P
        for _ in range(25):
            x = rng.standard_normal(sys.dim)
            res = dk.constructive_split(cache, report, x)
            err = max(
                float(np.max(np.abs(res.x1 - report.P @ x))),
                float(np.max(np.abs(res.x2 - q @ x))),
            )
            assert err <= 1e-5, f"{sys.name}: split error {err:.3g}"
            worst = max(worst, err)
    _passline(5, f"splitting agrees with the projections to {worst:.2e} "
                 f"for 25 random vectors on each of 4 systems")


def test_criterion_6_projector_family_invariance():
    grid = dk.make_grid(-8.0, 8.0, 0.01)
    systems = [
        dk.builtin("const_diag", {"diag": (-1.0, 1.0)}),
        dk.builtin("const_full", {"matrix": [[0.0, 1.0], [1.0, 0.0]]}),
        dk.constant_system(FOUR_BLOCK, name="four_block"),
        dk.builtin("rotating_hyperbolic", {"omega": 0.1}),
        dk.builtin("periodic_hyperbolic"),
    ]
    sups = []
    for sys in systems:
        cache = dk.propagate(sys, grid)
        report = dk.window_projector(cache)
        fam = dk.projector_family(cache, report)
        assert math.isfinite(fam.sup_norm)
        sups.append(fam.sup_norm)
        pts = grid.points
        rng = np.random.default_rng(SEED)
        for _ in range(100):
            i, j = rng.integers(0, len(pts), 2)
            tr = dk.transition(cache, pts[i], pts[j])
            defect = np.linalg.norm(tr @ fam.projectors[j] - fam.projectors[i] @ tr, 2)
            assert defect <= 1e-6 * np.linalg.norm(tr, 2), f"{sys.name}: defect {defect:.3g}"
    _passline(6, "flow invariance of P(t) holds on 100 pairs per system; "
                 f"sup norms: {', '.join(f'{s:.3g}' for s in sups)}")


def test_criterion_7_decay_constants_chain(diag_cache, diag_report):
    growth = dk.GrowthEstimate(alpha=1.0, beta=1.0, attained_at=(0.0, 0.0))
    dc = dk.decay_constants(growth, 2.0)
    assert dc.prefactor == pytest.approx(4.0 * math.e, rel=1e-12)
    assert dc.dwell == pytest.approx(64.0 * math.e**2, rel=1e-6)
    assert dc.rate == math.log(2.0) / dc.dwell

    fitted = dk.decay_constants(dk.estimate_growth(diag_cache),
                                diag_report.inverse_norm_bound())
    rng = np.random.default_rng(SEED)
    for _ in range(10):
        x0 = np.array([float(rng.standard_normal()), 0.0])
        res = dk.decay_check(diag_cache, x0, "forward", fitted)
        assert res.passed
    _passline(7, f"prefactor=4e, dwell=64e^2 (rate {dc.rate:.4e}); forward decay "
                 f"certified on 10 stable solutions")


def test_criterion_8_shear_negative_control(tmp_path):
    sys = dk.builtin("no_dichotomy_shear")
    verdicts = {}
    for half_width in (8.0, 16.0, 32.0):
        grid = dk.make_grid(-half_width, half_width, 0.01)
        cache = dk.propagate(sys, grid)
        report = dk.window_projector(cache)
        assert report.verdict in ("inconclusive", "not_dichotomic")
        verdicts[half_width] = report.verdict

    cfg = tmp_path / "shear.json"
    cfg.write_text(json.dumps({
        "system": {"builtin": "no_dichotomy_shear"},
        "grid": {"t_min": -8.0, "t_max": 8.0, "h": 0.01},
    }))
    exit_code = cli_main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert exit_code in (2, 3)
    _passline(8, f"shear never certifies: verdicts {verdicts}, analyze exit {exit_code}")


def test_criterion_9_sweep_determinism(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({
        "system": {"builtin": "const_diag", "params": {"diag": [-1.0, 1.0]}},
        "grid": {"t_min": -8.0, "t_max": 8.0, "h": 0.01},
        "perturbation": {"kind": "random"},
        "amplitudes": [0.1, 0.3, 0.49],
    }))
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli_main(["sweep", "--config", str(cfg), "--out", str(out1), "--seed", "24301"]) == 0
    assert cli_main(["sweep", "--config", str(cfg), "--out", str(out2), "--seed", "24301"]) == 0
    b1 = (out1 / "sweep.csv").read_bytes()
    b2 = (out2 / "sweep.csv").read_bytes()
    assert b1 == b2
    _passline(9, f"repeated sweep runs are byte-identical ({len(b1)} bytes)")
