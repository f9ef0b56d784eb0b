"""Command-line front end.

Four commands, all driven by a single JSON config document::

    dichokit analyze --config cfg.json --out results/
    dichokit solve   --config cfg.json --out results/
    dichokit perturb --config cfg.json --out results/
    dichokit sweep   --config cfg.json --out results/

Exit codes: 0 when the (base) system certifies dichotomic, 2 when it is not
dichotomic, 3 when the analysis is inconclusive, 1 on configuration or
compute errors (message on stderr).  All numeric CSV output uses 17
significant digits so reruns round-trip bit for bit.
"""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from pathlib import Path

import numpy as np

from . import green, roughness
from .dichotomy import AnalysisResult, analyze_system, projector_family
from .errors import ConfigError, DichokitError
from .propagator import DEFAULT_SEED
from .systems import (
    LinearSystem,
    TimeGrid,
    builtin,
    load_sampled,
    make_grid,
    make_perturbation,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_DICHOTOMIC = 2
EXIT_INCONCLUSIVE = 3

_VERDICT_EXIT = {
    "dichotomic": EXIT_OK,
    "not_dichotomic": EXIT_NOT_DICHOTOMIC,
    "inconclusive": EXIT_INCONCLUSIVE,
}


def _fmt(x) -> str:
    """17-significant-digit decimal form; round-trip exact for doubles."""
    return f"{float(x):.17g}"


def _num_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _matrix_or_none(m):
    return None if m is None else np.asarray(m).tolist()


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with p.open("r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    # Fail fast: every referenced file must exist before any computation.
    system = cfg.get("system", {})
    if "sampled" in system and not Path(system["sampled"]).is_file():
        raise ConfigError(f"sampled system file not found: {system['sampled']}")
    forcing = cfg.get("forcing")
    if isinstance(forcing, str) and forcing.startswith("file:"):
        fpath = forcing[len("file:"):]
        if not Path(fpath).is_file():
            raise ConfigError(f"forcing file not found: {fpath}")
    return cfg


def _build_system(cfg: dict) -> LinearSystem:
    system = cfg.get("system")
    if not isinstance(system, dict):
        raise ConfigError("config needs a 'system' object")
    if "builtin" in system:
        return builtin(system["builtin"], system.get("params"))
    if "sampled" in system:
        return load_sampled(system["sampled"])
    raise ConfigError("'system' needs either 'builtin' or 'sampled'")


def _build_grid(cfg: dict) -> TimeGrid:
    g = cfg.get("grid")
    if not isinstance(g, dict):
        raise ConfigError("config needs a 'grid' object with t_min, t_max, h")
    try:
        return make_grid(float(g["t_min"]), float(g["t_max"]), float(g["h"]))
    except KeyError as exc:
        raise ConfigError(f"grid is missing {exc}") from None


def _parse_forcing(spec: str, sys_dim: int, grid: TimeGrid) -> green.ForcingFunction:
    """Forcing mini-grammar: const:<c1,...,cn>, sin:<component>, file:<path>.

    ``sin:k`` is a sinusoidal probe on 1-based component k with f_k(t) =
    cos t, the phase convention under which the bounded response of a unit
    stable scalar mode is (cos t + sin t) / 2.
    """
    if not isinstance(spec, str) or ":" not in spec:
        raise ConfigError(f"bad forcing spec {spec!r}")
    kind, _, arg = spec.partition(":")
    if kind == "const":
        try:
            c = np.array([float(v) for v in arg.split(",")])
        except ValueError:
            raise ConfigError(f"bad constant forcing {spec!r}") from None
        if c.shape[0] != sys_dim:
            raise ConfigError(f"forcing has {c.shape[0]} components, system has {sys_dim}")
        return green.make_forcing(lambda t: c, grid)
    if kind == "sin":
        try:
            comp = int(arg)
        except ValueError:
            raise ConfigError(f"bad component in forcing {spec!r}") from None
        if not (1 <= comp <= sys_dim):
            raise ConfigError(f"forcing component {comp} outside 1..{sys_dim}")
        e = np.zeros(sys_dim)
        e[comp - 1] = 1.0
        return green.make_forcing(lambda t: math.cos(t) * e, grid)
    if kind == "file":
        return _load_forcing_file(arg, sys_dim, grid)
    raise ConfigError(f"unknown forcing kind {kind!r}")


def _load_forcing_file(path: str, sys_dim: int, grid: TimeGrid) -> green.ForcingFunction:
    from .systems import _parse_sampled_rows

    with open(path, "r", encoding="utf-8") as fh:
        times, rows = _parse_sampled_rows(fh, path)
    if rows.shape[1] != sys_dim:
        raise ConfigError(f"{path}: {rows.shape[1]} forcing components, system has {sys_dim}")
    if np.any(np.diff(times) <= 0.0):
        raise ConfigError(f"{path}: forcing times must be strictly increasing")
    if times[0] > grid.t_min or times[-1] < grid.t_max:
        raise ConfigError(f"{path}: forcing does not cover the grid range")
    samples = np.empty((grid.n_points, sys_dim))
    for j in range(sys_dim):
        samples[:, j] = np.interp(grid.points, times, rows[:, j])
    return green.forcing_from_samples(samples, grid)


def _build_perturbation(cfg: dict, sys_dim: int, grid: TimeGrid, seed: int):
    p = cfg.get("perturbation", {"kind": "random"})
    if not isinstance(p, dict):
        raise ConfigError("'perturbation' must be an object")
    kind = p.get("kind", "random")
    if kind == "random":
        return roughness.random_perturbation(
            sys_dim, grid, 1.0, seed=int(p.get("seed", seed)),
            frequency=float(p.get("frequency", 0.3)),
        )
    if kind == "constant":
        m = np.asarray(p.get("matrix"), dtype=float)
        if m.shape != (sys_dim, sys_dim):
            raise ConfigError(f"perturbation matrix shape {m.shape} != ({sys_dim}, {sys_dim})")
        direction = make_perturbation(lambda t: m, grid)
        if direction.sup_norm == 0.0:
            raise ConfigError("perturbation matrix is zero")
        return direction.scaled(1.0 / direction.sup_norm)
    raise ConfigError(f"unknown perturbation kind {kind!r}")


def _report_json(res: AnalysisResult) -> dict:
    r = res.report
    return {
        "verdict": r.verdict,
        "failure": r.failure,
        "gap_ratio": _num_or_none(r.gap_ratio),
        "t_ref": r.t_ref,
        "P": _matrix_or_none(r.P),
        "Q": _matrix_or_none(r.Q),
        "X1_basis": _matrix_or_none(r.X1_basis),
        "X2_basis": _matrix_or_none(r.X2_basis),
        "N1": _num_or_none(r.N1),
        "nu1": _num_or_none(r.nu1),
        "N2": _num_or_none(r.N2),
        "nu2": _num_or_none(r.nu2),
        "p_vacuous": r.p_vacuous,
        "q_vacuous": r.q_vacuous,
        "inverse_norm_bound": _num_or_none(
            r.inverse_norm_bound() if r.has_constants else None
        ),
    }


def _write_json(path: Path, payload: dict) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _analyze(cfg: dict, out: Path, seed: int) -> tuple[int, AnalysisResult]:
    system = _build_system(cfg)
    grid = _build_grid(cfg)
    escalate = bool(cfg.get("escalate_window", True))
    res = analyze_system(system, grid, escalate=escalate, seed=seed)
    _write_json(out / "growth.json", {
        "alpha": res.growth.alpha,
        "beta": res.growth.beta,
        "attained_at": list(res.growth.attained_at),
    })
    _write_json(out / "dichotomy.json", _report_json(res))

    lines = [
        "dichotomy analysis",
        f"system: {system.name} (kind {system.kind}, dim {system.dim})",
        f"grid: [{_fmt(res.cache.grid.t_min)}, {_fmt(res.cache.grid.t_max)}] "
        f"h={_fmt(res.cache.grid.h)} ({res.cache.grid.n_points} points)",
        f"growth envelope: alpha={_fmt(res.growth.alpha)} beta={_fmt(res.growth.beta)}",
        f"verdict: {res.report.verdict}"
        + (f" (failure: {res.report.failure})" if res.report.failure else ""),
        f"gap ratio: {_fmt(res.report.gap_ratio)}",
    ]
    if res.report.has_constants:
        r = res.report
        lines += [
            f"constants: N1={_fmt(r.N1)} nu1={_fmt(r.nu1)} N2={_fmt(r.N2)} nu2={_fmt(r.nu2)}",
            f"inverse-norm bound N1/nu1 + N2/nu2: {_fmt(r.inverse_norm_bound())}",
            f"admissibility threshold: {_fmt(roughness.threshold(r))}",
        ]
        fam = projector_family(res.cache, r)
        lines.append(f"sup ||P(t)||: {_fmt(fam.sup_norm)}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return _VERDICT_EXIT[res.report.verdict], res


def cmd_analyze(cfg: dict, out: Path, seed: int) -> int:
    code, _ = _analyze(cfg, out, seed)
    return code


def cmd_solve(cfg: dict, out: Path, seed: int) -> int:
    system = _build_system(cfg)
    grid = _build_grid(cfg)
    res = analyze_system(system, grid, escalate=False, seed=seed)
    if not res.report.is_dichotomic:
        print(
            f"system is {res.report.verdict}; no bounded-solution operator",
            file=_sys.stderr,
        )
        return _VERDICT_EXIT[res.report.verdict]
    forcing_spec = cfg.get("forcing")
    if forcing_spec is None:
        raise ConfigError("solve needs a 'forcing' spec")
    forcing = _parse_forcing(forcing_spec, system.dim, res.cache.grid)
    sol = green.green_solve(res.cache, res.report, forcing)

    n = system.dim
    header = "t," + ",".join(f"u{j + 1}" for j in range(n)) + ",residual"
    rows = [header]
    for k in range(grid.n_points):
        cells = [_fmt(grid.points[k])]
        cells += [_fmt(v) for v in sol.u[k]]
        cells.append(_fmt(sol.residual_norms[k]))
        rows.append(",".join(cells))
    (out / "solution.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"bound_margin {_fmt(sol.bound_margin)}")
    print(f"u_sup {_fmt(sol.u_sup)}")
    print(f"residual_sup {_fmt(sol.residual_sup)}")
    return EXIT_OK


def cmd_perturb(cfg: dict, out: Path, seed: int) -> int:
    system = _build_system(cfg)
    grid = _build_grid(cfg)
    base = analyze_system(system, grid, escalate=False, seed=seed)
    if not base.report.is_dichotomic:
        print(f"base system is {base.report.verdict}", file=_sys.stderr)
        return _VERDICT_EXIT[base.report.verdict]
    amplitude = float(cfg.get("amplitude", 0.0))
    direction = _build_perturbation(cfg, system.dim, grid, seed)
    rep = roughness.perturb_and_verify(
        system, direction.scaled(amplitude), grid, base=base, seed=seed
    )
    payload = {
        "amplitude": amplitude,
        "b_norm": rep.b_norm,
        "threshold": rep.threshold,
        "admissible": rep.admissible,
        "verdict": rep.perturbed.verdict,
        "guarantee": "certified" if rep.admissible else "no guarantee",
        "perturbed": {
            "N1": _num_or_none(rep.perturbed.N1),
            "nu1": _num_or_none(rep.perturbed.nu1),
            "N2": _num_or_none(rep.perturbed.N2),
            "nu2": _num_or_none(rep.perturbed.nu2),
            "gap_ratio": _num_or_none(rep.perturbed.gap_ratio),
        },
        "perturbed_inv_bound": _num_or_none(rep.perturbed_inv_bound),
        "certified": None if rep.certified is None else {
            "prefactor": rep.certified.prefactor,
            "dwell": rep.certified.dwell,
            "rate": rep.certified.rate,
            "inv_norm_bound": rep.certified.inv_norm_bound,
            "envelope_prefactor": rep.certified.envelope_prefactor,
        },
        "base_constants": {
            "N1": _num_or_none(rep.base_constants[0]),
            "nu1": _num_or_none(rep.base_constants[1]),
            "N2": _num_or_none(rep.base_constants[2]),
            "nu2": _num_or_none(rep.base_constants[3]),
        },
        "base_growth": {"alpha": rep.base_growth[0], "beta": rep.base_growth[1]},
        "constants_traceable": rep.constants_traceable,
    }
    _write_json(out / "perturb.json", payload)
    print(
        f"admissible={'true' if rep.admissible else 'false'} "
        f"verdict={rep.perturbed.verdict}"
    )
    return EXIT_OK


_SWEEP_COLUMNS = (
    "amplitude,b_norm,threshold,admissible,verdict,N1,nu1,N2,nu2,perturbed_inv_bound"
)


def cmd_sweep(cfg: dict, out: Path, seed: int) -> int:
    system = _build_system(cfg)
    grid = _build_grid(cfg)
    amplitudes = cfg.get("amplitudes")
    if not isinstance(amplitudes, list):
        raise ConfigError("sweep needs an 'amplitudes' list")
    base = analyze_system(system, grid, escalate=False, seed=seed)
    if not base.report.is_dichotomic:
        print(f"base system is {base.report.verdict}", file=_sys.stderr)
        return _VERDICT_EXIT[base.report.verdict]
    direction = _build_perturbation(cfg, system.dim, grid, seed)
    rows = roughness.sweep(system, direction, amplitudes, grid, base=base, seed=seed)

    def cell(x):
        return "" if x is None or (isinstance(x, float) and not math.isfinite(x)) else _fmt(x)

    lines = [_SWEEP_COLUMNS]
    for r in rows:
        lines.append(",".join([
            _fmt(r.amplitude), _fmt(r.b_norm), _fmt(r.threshold),
            "true" if r.admissible else "false", r.verdict,
            cell(r.N1), cell(r.nu1), cell(r.N2), cell(r.nu2),
            cell(r.perturbed_inv_bound),
        ]))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    no_guarantee = sum(1 for r in rows if not r.admissible)
    print(f"sweep: {len(rows)} rows, {no_guarantee} beyond threshold (no guarantee)")
    return EXIT_OK


_COMMANDS = {
    "analyze": cmd_analyze,
    "solve": cmd_solve,
    "perturb": cmd_perturb,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dichokit",
        description="Decide, certify, and exploit exponential dichotomy of x' = A(t)x.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="seed for all randomized internals")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args.seed)
    except DichokitError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
