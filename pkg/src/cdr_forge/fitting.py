"""Regression step: plain per-observable CDR and the symmetric variant.

The symmetric fit minimizes the pooled squared residual over all observables
subject to every observable's mitigated value agreeing, solved exactly
through the KKT linear system of the constrained quadratic program.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SingularFitError

VALUE_RANGE_TOL = 1e-9
SINGULAR_VARIANCE_TOL = 1e-20
DEGENERATE_CONDITION = 1e12


def _check_value(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        raise ConfigurationError(f"{name} is not finite: {value}")
    if abs(value) > 1 + VALUE_RANGE_TOL:
        raise ConfigurationError(f"{name}={value} outside [-1, 1]")
    return value


@dataclass(frozen=True)
class TrainingSample:
    circuit_id: str
    observable_id: str
    o_exact: float
    o_noisy: float
    shots: int

    def __post_init__(self):
        _check_value("o_exact", self.o_exact)
        _check_value("o_noisy", self.o_noisy)
        if self.shots < 0:
            raise ConfigurationError(f"shots must be >= 0, got {self.shots}")


@dataclass(frozen=True)
class TrainingSet:
    samples: tuple[TrainingSample, ...]
    coi_noisy: dict[str, float]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "coi_noisy", dict(self.coi_noisy))
        for key, value in self.coi_noisy.items():
            _check_value(f"coi_noisy[{key}]", value)
        missing = {s.observable_id for s in self.samples} - set(self.coi_noisy)
        if missing:
            raise ConfigurationError(
                f"observables {sorted(missing)} have samples but no coi_noisy value"
            )

    def observable_ids(self) -> list[str]:
        return sorted({s.observable_id for s in self.samples})

    def pairs(self, observable_id: str) -> tuple[np.ndarray, np.ndarray]:
        """(noisy, exact) arrays for one observable, in sample order."""
        noisy = [s.o_noisy for s in self.samples if s.observable_id == observable_id]
        exact = [s.o_exact for s in self.samples if s.observable_id == observable_id]
        return np.asarray(noisy), np.asarray(exact)


@dataclass(frozen=True)
class CdrResult:
    fits: dict[str, tuple[float, float]]
    mitigated: dict[str, float]
    common_value: float | None
    diagnostics: dict = field(default_factory=dict)


def fit_plain(ts: TrainingSet, observable_id: str) -> tuple[float, float]:
    """Closed-form OLS of O_exact against O_noisy for one observable."""
    noisy, exact = ts.pairs(observable_id)
    if noisy.size < 2:
        raise ConfigurationError(
            f"need at least 2 samples for {observable_id}, got {noisy.size}"
        )
    dx = noisy - noisy.mean()
    sxx = float(dx @ dx)
    if sxx <= SINGULAR_VARIANCE_TOL:
        raise SingularFitError(
            f"all noisy values for {observable_id} coincide",
            variance=sxx / noisy.size,
        )
    a = float(dx @ (exact - exact.mean())) / sxx
    b = float(exact.mean() - a * noisy.mean())
    return a, b


def mitigate_plain(fit: tuple[float, float], coi_noisy: float) -> float:
    a, b = fit
    return a * coi_noisy + b


def outside_physical_range(value: float, tol: float = VALUE_RANGE_TOL) -> bool:
    return abs(value) > 1 + tol


def fit_symmetric(ts: TrainingSet) -> CdrResult:
    """Equality-constrained least squares over all sampled observables.

    Variables (a_j, b_j) per observable plus the shared mitigated value c;
    constraints a_j * coi_noisy_j + b_j = c.  The KKT matrix is solved
    directly; a numerically singular system falls back to the minimum-norm
    least-squares solution and is flagged degenerate.
    """
    ids = ts.observable_ids()
    if not ids:
        raise ConfigurationError("training set has no samples")
    m = len(ids)
    dim = 2 * m + 1
    # objective: sum_j ||a_j n + b_j - e||^2  ->  (1/2) z^T Q z - p^T z form
    q = np.zeros((dim, dim))
    p = np.zeros(dim)
    total_samples = 0
    for j, oid in enumerate(ids):
        noisy, exact = ts.pairs(oid)
        total_samples += noisy.size
        q[2 * j, 2 * j] = 2.0 * float(noisy @ noisy)
        q[2 * j, 2 * j + 1] = q[2 * j + 1, 2 * j] = 2.0 * float(noisy.sum())
        q[2 * j + 1, 2 * j + 1] = 2.0 * noisy.size
        p[2 * j] = 2.0 * float(noisy @ exact)
        p[2 * j + 1] = 2.0 * float(exact.sum())
    constraints = np.zeros((m, dim))
    for j, oid in enumerate(ids):
        constraints[j, 2 * j] = ts.coi_noisy[oid]
        constraints[j, 2 * j + 1] = 1.0
        constraints[j, 2 * m] = -1.0
    kkt = np.zeros((dim + m, dim + m))
    kkt[:dim, :dim] = q
    kkt[:dim, dim:] = constraints.T
    kkt[dim:, :dim] = constraints
    rhs = np.concatenate([p, np.zeros(m)])

    condition = float(np.linalg.cond(kkt))
    degenerate = not np.isfinite(condition) or condition > DEGENERATE_CONDITION
    if degenerate:
        solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    else:
        solution = np.linalg.solve(kkt, rhs)
    z = solution[:dim]

    c = float(z[2 * m])
    fits = {oid: (float(z[2 * j]), float(z[2 * j + 1])) for j, oid in enumerate(ids)}
    mitigated = {oid: mitigate_plain(fits[oid], ts.coi_noisy[oid]) for oid in ids}
    diagnostics = {
        "condition": condition,
        "degenerate": degenerate,
        "underdetermined": total_samples < dim,
        "outside_range": sorted(
            oid for oid, value in mitigated.items() if outside_physical_range(value)
        ),
    }
    return CdrResult(fits, mitigated, c, diagnostics)


def absolute_error(
    values: dict[str, float], exact: dict[str, float], normalized: bool = False
) -> float:
    """|sum_j (value_j - exact_j)|; signed deviations cancel by design.

    The normalized variant divides by the observable count.
    """
    if set(values) != set(exact):
        raise ConfigurationError(
            f"key mismatch: {sorted(set(values) ^ set(exact))}"
        )
    if not values:
        raise ConfigurationError("no observables to compare")
    total = sum(values[k] - exact[k] for k in values)
    if normalized:
        total /= len(values)
    return abs(total)


def fit_report(result: CdrResult, ts: TrainingSet, method: str) -> dict:
    """JSON-ready summary of one fit."""
    counts = {oid: int(ts.pairs(oid)[0].size) for oid in result.fits}
    return {
        "method": method,
        "per_observable": [
            {"j": oid, "a": a, "b": b, "n_samples": counts[oid]}
            for oid, (a, b) in sorted(result.fits.items())
        ],
        "c": result.common_value,
        "mitigated": dict(sorted(result.mitigated.items())),
        "diagnostics": dict(result.diagnostics),
    }
