"""Time grids, coefficient functions A(t), and perturbation envelopes.

A linear nonautonomous system x' = A(t) x is described by a
:class:`LinearSystem`: a dimension, a matrix-valued coefficient function, and
a kind tag.  Systems come from three sources: the builtin catalog
(:func:`builtin`), sampled matrix data on disk (:func:`load_sampled`), or
direct construction.

Sampled-data CSV schema
-----------------------
Header ``t,a11,a12,...,ann`` with row-major matrix entries, one row per
sample time, strictly increasing ``t``, decimal floating point, UTF-8.
Lines starting with ``#`` are ignored.  Queries between samples use
piecewise-linear interpolation; queries outside the sampled range are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _linalg
from .errors import (
    DimensionError,
    InvalidGrid,
    NonMonotoneTime,
    OffGrid,
    OutOfDomain,
    ParseError,
    UnknownSystem,
)

MAX_DIM = 64
MAX_GRID_POINTS = 10**7

_GRID_RATIO_TOL = 1e-12
_GRID_MATCH_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_min + k*h, immutable after construction."""

    t_min: float
    t_max: float
    h: float
    points: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to t, or raise OffGrid."""
        i = int(round((t - self.t_min) / self.h))
        if i < 0 or i >= self.n_points:
            raise OffGrid(f"t={t} outside grid [{self.t_min}, {self.t_max}]")
        if abs(self.points[i] - t) > _GRID_MATCH_TOL * max(1.0, abs(t)):
            raise OffGrid(f"t={t} is not a grid point (h={self.h})")
        return i

    def center_index(self) -> int:
        """Index of the grid point closest to t = 0 (clipped to the grid)."""
        i = int(round((0.0 - self.t_min) / self.h))
        return min(max(i, 0), self.n_points - 1)

    def is_symmetric(self) -> bool:
        scale = max(1.0, abs(self.t_max))
        if abs(self.t_min + self.t_max) > _GRID_MATCH_TOL * scale:
            return False
        c = self.center_index()
        return abs(self.points[c]) <= _GRID_MATCH_TOL * scale


def make_grid(t_min: float, t_max: float, h: float) -> TimeGrid:
    """Uniform grid covering [t_min, t_max] with step h.

    (t_max - t_min)/h must be an integer within rounding tolerance and the
    grid may not exceed ``MAX_GRID_POINTS`` points.
    """
    if not (t_min < t_max):
        raise InvalidGrid(f"need t_min < t_max, got [{t_min}, {t_max}]")
    if not (h > 0.0):
        raise InvalidGrid(f"need h > 0, got {h}")
    ratio = (t_max - t_min) / h
    n_steps = round(ratio)
    if n_steps < 1 or abs(ratio - n_steps) > _GRID_RATIO_TOL * max(1.0, ratio):
        raise InvalidGrid(f"(t_max - t_min)/h = {ratio} is not an integer")
    if n_steps > MAX_GRID_POINTS:
        raise InvalidGrid(f"grid would have {n_steps + 1} points (cap {MAX_GRID_POINTS})")
    points = t_min + h * np.arange(n_steps + 1)
    if abs(points[-1] - t_max) > _GRID_RATIO_TOL * max(1.0, abs(t_max)):
        points = points.copy()
        points[-1] = t_max
    return TimeGrid(float(t_min), float(t_max), float(h), _readonly(points))


@dataclass(frozen=True)
class LinearSystem:
    """Coefficient function A(t) of x' = A(t) x.

    ``kind`` is one of {"constant", "builtin-parametric", "sampled"}.
    ``known_dichotomic`` records the catalog's documented status where one
    exists (True/False) and is None otherwise.
    """

    dim: int
    A: Callable[[float], np.ndarray] = field(repr=False)
    kind: str
    name: str = "anonymous"
    params: Mapping[str, object] = field(default_factory=dict)
    known_dichotomic: bool | None = None

    def __post_init__(self):
        if self.dim < 1 or self.dim > MAX_DIM:
            raise DimensionError(f"dimension {self.dim} outside [1, {MAX_DIM}]")

    def eval_on(self, grid: TimeGrid) -> np.ndarray:
        """A(t) stacked over the grid, shape (n_points, dim, dim)."""
        out = np.empty((grid.n_points, self.dim, self.dim))
        for k, t in enumerate(grid.points):
            out[k] = self.A(t)
        return out


def constant_system(matrix: Sequence[Sequence[float]], name: str = "constant") -> LinearSystem:
    """Wrap a constant matrix as a LinearSystem of kind ``constant``."""
    a = _readonly(np.asarray(matrix, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"constant matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParseError("constant matrix has non-finite entries")
    eigs = np.linalg.eigvals(a)
    known = bool(np.min(np.abs(eigs.real)) > 1e-8)
    return LinearSystem(
        dim=a.shape[0],
        A=lambda t, _a=a: _a,
        kind="constant",
        name=name,
        params={"matrix": a},
        known_dichotomic=known,
    )


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _build_const_diag(params: Mapping[str, object]) -> LinearSystem:
    diag = np.asarray(params.get("diag", (-1.0, 1.0)), dtype=float)
    return constant_system(np.diag(diag), name="const_diag")


def _build_const_full(params: Mapping[str, object]) -> LinearSystem:
    matrix = params.get("matrix", ((0.0, 1.0), (1.0, 0.0)))
    return constant_system(matrix, name="const_full")


def _build_rotating_hyperbolic(params: Mapping[str, object]) -> LinearSystem:
    # A(t) = R(wt) D R(-wt) + w J with D = diag(-1, 1); the rotating-frame
    # change of variables is an isometry, so the system inherits the
    # dichotomy of D with the same constants for every w.
    omega = float(params.get("omega", 0.1))
    d = np.diag([-1.0, 1.0])
    j = np.array([[0.0, -1.0], [1.0, 0.0]])

    def a_of_t(t: float, _d=d, _j=j, _w=omega) -> np.ndarray:
        r = _rotation(_w * t)
        return r @ _d @ r.T + _w * _j

    return LinearSystem(
        dim=2, A=a_of_t, kind="builtin-parametric",
        name="rotating_hyperbolic", params={"omega": omega},
        known_dichotomic=True,
    )


def _build_periodic_hyperbolic(params: Mapping[str, object]) -> LinearSystem:
    # diag(-1, 1) plus a sinusoidal symmetric coupling of amplitude eps.
    # For |eps| < 0.5 the perturbation stays below the admissibility
    # threshold of the unperturbed system, which certifies the dichotomy.
    eps = float(params.get("epsilon", 0.3))
    omega = float(params.get("omega", 1.0))
    d = np.diag([-1.0, 1.0])
    s = np.array([[0.0, 1.0], [1.0, 0.0]])

    def a_of_t(t: float, _d=d, _s=s, _e=eps, _w=omega) -> np.ndarray:
        return _d + _e * math.sin(_w * t) * _s

    return LinearSystem(
        dim=2, A=a_of_t, kind="builtin-parametric",
        name="periodic_hyperbolic", params={"epsilon": eps, "omega": omega},
        known_dichotomic=bool(abs(eps) < 0.5),
    )


def _build_shear(params: Mapping[str, object]) -> LinearSystem:
    # Double zero eigenvalue with a Jordan block: polynomial growth, no
    # exponential splitting; constant_system already records that status.
    return constant_system([[0.0, 1.0], [0.0, 0.0]], name="no_dichotomy_shear")


_CATALOG = {
    "const_diag": _build_const_diag,
    "const_full": _build_const_full,
    "rotating_hyperbolic": _build_rotating_hyperbolic,
    "periodic_hyperbolic": _build_periodic_hyperbolic,
    "no_dichotomy_shear": _build_shear,
}


def catalog_names() -> tuple[str, ...]:
    return tuple(sorted(_CATALOG))


def builtin(name: str, params: Mapping[str, object] | None = None) -> LinearSystem:
    """Instantiate a catalog system by name.

    Catalog and documented dichotomy status:

    ==================== ========================================== ============
    name                 definition                                 dichotomic
    ==================== ========================================== ============
    const_diag           diag(d1, ..., dn), default diag(-1, 1)     iff no d_i
                                                                    on the axis
    const_full           constant matrix, default [[0,1],[1,0]]     iff no
                                                                    imaginary-
                                                                    axis eigs
    rotating_hyperbolic  rotating frame around diag(-1, 1)          yes (any w)
    periodic_hyperbolic  diag(-1, 1) + eps*sin(wt)*[[0,1],[1,0]]    |eps| < 0.5
    no_dichotomy_shear   [[0,1],[0,0]]                              no
    ==================== ========================================== ============
    """
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise UnknownSystem(
            f"unknown builtin {name!r}; catalog: {', '.join(catalog_names())}"
        ) from None
    return builder(params or {})


def _parse_sampled_rows(lines, origin: str):
    header = None
    times = []
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            if fields[0].lower() != "t":
                raise ParseError(f"{origin}:{lineno}: expected header starting with 't'")
            header = fields
            continue
        if len(fields) != len(header):
            raise ParseError(
                f"{origin}:{lineno}: {len(fields)} fields, header has {len(header)}"
            )
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"{origin}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError(f"{origin}:{lineno}: non-finite value")
        times.append(values[0])
        rows.append(values[1:])
    if header is None or not rows:
        raise ParseError(f"{origin}: no data rows")
    return np.asarray(times), np.asarray(rows)


def load_sampled(path) -> LinearSystem:
    """Load a sampled system from a CSV file (schema in the module docstring)."""
    with open(path, "r", encoding="utf-8") as fh:
        times, rows = _parse_sampled_rows(fh, str(path))
    n_entries = rows.shape[1]
    n = math.isqrt(n_entries)
    if n * n != n_entries:
        raise DimensionError(
            f"{path}: {n_entries} matrix entries per row is not a perfect square"
        )
    if n > MAX_DIM:
        raise DimensionError(f"{path}: dimension {n} exceeds cap {MAX_DIM}")
    if np.any(np.diff(times) <= 0.0):
        raise NonMonotoneTime(f"{path}: sample times must be strictly increasing")
    mats = _readonly(rows.reshape(-1, n, n))
    times = _readonly(times)

    def a_of_t(t: float, _t=times, _m=mats) -> np.ndarray:
        # Piecewise-linear in t; exact at sample times, error outside range.
        if t < _t[0] or t > _t[-1]:
            raise OutOfDomain(f"t={t} outside sampled range [{_t[0]}, {_t[-1]}]")
        i = int(np.searchsorted(_t, t, side="right")) - 1
        if i >= len(_t) - 1:
            return _m[-1].copy()
        w = (t - _t[i]) / (_t[i + 1] - _t[i])
        return (1.0 - w) * _m[i] + w * _m[i + 1]

    return LinearSystem(
        dim=n, A=a_of_t, kind="sampled", name=str(path),
        params={"t_range": (float(times[0]), float(times[-1]))},
    )


@dataclass(frozen=True)
class PerturbationSpec:
    """Perturbation B(t) with its sup (spectral) norm over a grid."""

    B: Callable[[float], np.ndarray] = field(repr=False)
    sup_norm: float
    dim: int

    def scaled(self, c: float) -> "PerturbationSpec":
        """Scale the perturbation by c >= 0; the sup norm scales with it."""
        if c < 0.0:
            raise ValueError("scale factor must be nonnegative")
        b = self.B
        return PerturbationSpec(
            B=lambda t, _b=b, _c=c: _c * _b(t),
            sup_norm=c * self.sup_norm,
            dim=self.dim,
        )


def make_perturbation(B: Callable[[float], np.ndarray], grid: TimeGrid) -> PerturbationSpec:
    """Wrap B(t) with its measured sup spectral norm over the grid points."""
    first = np.asarray(B(grid.points[0]), dtype=float)
    if first.ndim != 2 or first.shape[0] != first.shape[1]:
        raise DimensionError(f"perturbation must be square, got shape {first.shape}")
    n = first.shape[0]
    stack = np.empty((grid.n_points, n, n))
    stack[0] = first
    for k in range(1, grid.n_points):
        stack[k] = B(grid.points[k])
    if not np.all(np.isfinite(stack)):
        raise ParseError("perturbation has non-finite values on the grid")
    sup = float(np.max(_linalg.spectral_norms(stack)))
    return PerturbationSpec(B=B, sup_norm=sup, dim=n)
