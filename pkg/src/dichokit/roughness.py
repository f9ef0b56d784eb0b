"""Persistence of dichotomy under bounded perturbations of the coefficient.

A certified dichotomy survives any perturbation B(t) whose sup norm stays
strictly below the reciprocal of the inverse-norm bound; the perturbed
bounded-solution operator is then invertible with the usual geometric-series
estimate, and certified perturbed constants follow from the original
constants, the original growth envelope, and the perturbation norm alone.
This module checks that guarantee numerically system by system and sweeps
perturbation amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dichotomy import (
    AnalysisResult,
    DecayConstants,
    DichotomyReport,
    VERDICT_DICHOTOMIC,
    analyze_system,
    decay_constants,
)
from .errors import DichokitError, NotAdmissible, NotDichotomic, TheoremViolationSuspected
from .propagator import DEFAULT_SEED, GrowthEstimate
from .systems import LinearSystem, PerturbationSpec, TimeGrid, make_perturbation


def threshold(report: DichotomyReport) -> float:
    """Admissibility threshold: reciprocal of the inverse-norm bound."""
    if not report.is_dichotomic:
        raise NotDichotomic(f"verdict is {report.verdict!r}")
    bound = report.inverse_norm_bound()
    return math.inf if bound == 0.0 else 1.0 / bound

def neumann_bound(inv_norm_bound: float, b_norm: float) -> float:
    """Perturbed inverse-norm bound from the geometric-series estimate.

    Requires b_norm * inv_norm_bound < 1 strictly; at or beyond that product
    the series gives no control and NotAdmissible is raised.
    """
    if inv_norm_bound <= 0.0:
        raise ValueError("inv_norm_bound must be positive")
    if b_norm < 0.0:
        raise ValueError("b_norm must be nonnegative")
    product = b_norm * inv_norm_bound
    if product >= 1.0:
        raise NotAdmissible(
            f"b_norm * inv_norm_bound = {product:.6g} >= 1; no inverse bound"
        )
    return inv_norm_bound / (1.0 - product)


def perturbed_growth_bound(growth: GrowthEstimate, b_norm: float) -> GrowthEstimate:
    """Growth envelope of the perturbed system by the comparison estimate.

    Adding a perturbation of sup norm b inflates the exponent by alpha * b
    while the prefactor survives; this keeps the certified perturbed
    constants a function of original data only.
    """
    return GrowthEstimate(
        alpha=growth.alpha,
        beta=growth.beta + growth.alpha * b_norm,
        attained_at=(math.nan, math.nan),
    )


def certified_perturbed_constants(
    base_report: DichotomyReport, base_growth: GrowthEstimate, b_norm: float
) -> tuple[DecayConstants, float]:
    """Certified decay constants of the perturbed system and its inverse bound.

    Deterministic in (N1, nu1, N2, nu2, alpha, beta, b_norm); recomputing
    from the same inputs reproduces the values bit for bit.
    """
    pert_inv = neumann_bound(base_report.inverse_norm_bound(), b_norm)
    certified = decay_constants(perturbed_growth_bound(base_growth, b_norm), pert_inv)
    return certified, pert_inv


@dataclass(frozen=True, eq=False)
class RoughnessReport:
    """Outcome of one perturbation check.

    ``perturbed`` carries the empirically fitted constants of the perturbed
    system; ``certified`` the conservative constants implied by the original
    data alone.  Both views are kept side by side on purpose: the first is
    what the numerics measure, the second what the guarantee provides.
    """

    threshold: float
    b_norm: float
    admissible: bool
    perturbed: DichotomyReport = field(repr=False)
    perturbed_growth: GrowthEstimate = field(repr=False)
    perturbed_inv_bound: float | None
    certified: DecayConstants | None
    base_constants: tuple[float, float, float, float]
    base_growth: tuple[float, float]
    constants_traceable: bool


def perturb_and_verify(
    sys: LinearSystem,
    B: PerturbationSpec,
    grid: TimeGrid,
    *,
    base: AnalysisResult | None = None,
    seed: int = DEFAULT_SEED,
) -> RoughnessReport:
    """Analyze A + B and confront the outcome with the roughness guarantee.

    The base system must certify dichotomic on the grid.  For admissible
    perturbations (sup norm strictly below the threshold) the perturbed
    system must certify as well; if it does not, the failure is numerical by
    the guarantee, and TheoremViolationSuspected is raised with diagnostics
    instead of returning a misleading report.
    """
    if base is None:
        base = analyze_system(sys, grid, escalate=False, seed=seed)
    if not base.report.is_dichotomic:
        raise NotDichotomic(
            f"base system verdict is {base.report.verdict!r}; cannot assess roughness"
        )
    thr = threshold(base.report)
    b_norm = B.sup_norm
    admissible = b_norm < thr

    a_of_t = sys.A
    b_of_t = B.B
    perturbed_sys = LinearSystem(
        dim=sys.dim,
        A=lambda t: np.asarray(a_of_t(t)) + np.asarray(b_of_t(t)),
        kind="builtin-parametric",
        name=f"{sys.name}+perturbation",
        params={"base": sys.name, "b_norm": b_norm},
    )
    pert = analyze_system(perturbed_sys, grid, escalate=False, seed=seed)

    perturbed_inv = None
    certified = None
    if admissible:
        certified, perturbed_inv = certified_perturbed_constants(
            base.report, base.growth, b_norm
        )
        if pert.report.verdict != VERDICT_DICHOTOMIC:
            raise TheoremViolationSuspected(
                f"admissible perturbation (b_norm {b_norm:.6g} < threshold "
                f"{thr:.6g}) failed verification: verdict "
                f"{pert.report.verdict!r}, failure {pert.report.failure!r}, "
                f"gap_ratio {pert.report.gap_ratio:.3g}; the window is too "
                "short or the grid too coarse for this system"
            )
    base_constants = (
        base.report.N1, base.report.nu1, base.report.N2, base.report.nu2
    )
    return RoughnessReport(
        threshold=thr,
        b_norm=b_norm,
        admissible=admissible,
        perturbed=pert.report,
        perturbed_growth=pert.growth,
        perturbed_inv_bound=perturbed_inv,
        certified=certified,
        base_constants=base_constants,
        base_growth=(base.growth.alpha, base.growth.beta),
        constants_traceable=admissible,
    )


@dataclass(frozen=True)
class SweepRow:
    """One amplitude of a perturbation sweep, CSV-ready."""

    amplitude: float
    b_norm: float
    threshold: float
    admissible: bool
    verdict: str
    N1: float | None
    nu1: float | None
    N2: float | None
    nu2: float | None
    perturbed_inv_bound: float | None
    error: str | None = None


def sweep(
    sys: LinearSystem,
    B_direction: PerturbationSpec,
    amplitudes,
    grid: TimeGrid,
    *,
    base: AnalysisResult | None = None,
    seed: int = DEFAULT_SEED,
) -> list[SweepRow]:
    """One perturbation check per amplitude along a unit-norm direction.

    Rows come back sorted by amplitude; a failing row records the error class
    and the sweep continues.  Amplitudes beyond the threshold are still
    analyzed but carry no guarantee, which the ``admissible`` flag records.
    """
    if abs(B_direction.sup_norm - 1.0) > 1e-9:
        raise ValueError(
            f"B_direction must have unit sup norm, got {B_direction.sup_norm!r}"
        )
    if base is None:
        base = analyze_system(sys, grid, escalate=False, seed=seed)
    if not base.report.is_dichotomic:
        raise NotDichotomic(
            f"base system verdict is {base.report.verdict!r}; cannot sweep"
        )
    thr = threshold(base.report)
    rows: list[SweepRow] = []
    for amp in sorted(float(a) for a in amplitudes):
        spec = B_direction.scaled(amp)
        try:
            rep = perturb_and_verify(sys, spec, grid, base=base, seed=seed)
            rows.append(SweepRow(
                amplitude=amp, b_norm=rep.b_norm, threshold=rep.threshold,
                admissible=rep.admissible, verdict=rep.perturbed.verdict,
                N1=rep.perturbed.N1, nu1=rep.perturbed.nu1,
                N2=rep.perturbed.N2, nu2=rep.perturbed.nu2,
                perturbed_inv_bound=rep.perturbed_inv_bound,
            ))
        except DichokitError as exc:
            rows.append(SweepRow(
                amplitude=amp, b_norm=spec.sup_norm, threshold=thr,
                admissible=spec.sup_norm < thr, verdict="error",
                N1=None, nu1=None, N2=None, nu2=None,
                perturbed_inv_bound=None, error=type(exc).__name__,
            ))
    return rows


def random_perturbation(
    dim: int,
    grid: TimeGrid,
    sup_norm: float,
    seed: int = DEFAULT_SEED,
    *,
    frequency: float = 0.3,
) -> PerturbationSpec:
    """Seeded random perturbation direction, normalized to a target sup norm.

    A constant random matrix plus a low-frequency sinusoidal modulation,
    which keeps the perturbation strongly continuous and genuinely
    time-varying while remaining reproducible.
    """
    rng = np.random.default_rng(seed)
    b0 = rng.standard_normal((dim, dim))
    b1 = rng.standard_normal((dim, dim))
    phase = float(rng.uniform(0.0, 2.0 * math.pi))

    def raw(t: float, _b0=b0, _b1=b1, _w=frequency, _p=phase) -> np.ndarray:
        return _b0 + math.sin(_w * t + _p) * _b1

    unscaled = make_perturbation(raw, grid)
    if unscaled.sup_norm == 0.0:
        raise ValueError("degenerate random perturbation")
    return unscaled.scaled(sup_norm / unscaled.sup_norm)
