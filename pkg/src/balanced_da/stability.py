"""Linear stability analysis of the blended propagator on oscillator models.

The blended step is linear on the harmonic test system H = p^2/2 + K q^2/2
(written as a fully constrained stiff system, g(q) = q), so its 2x2 flow
matrix can be extracted exactly by propagating unit vectors.  Closed forms
for the eigenvalues follow from trace = 1 + alpha - K h^2 alpha and
det = alpha:

    Lambda_12 = (1 + alpha)/2 - K h^2 alpha / 2 +- sqrt(d)/2,
    d = (trace)^2 - 4 alpha.

d changes sign at the bifurcation weights alpha_-, alpha_+ (roots of d in
alpha); between them the eigenvalues form a complex pair of modulus
sqrt(alpha) < 1, outside they are real.  For K h^2 < 2 the spectral radius
never exceeds one, i.e. blending only adds dissipation where the plain
Verlet step (alpha = 1) is stable.

The same probing applies to the two-mass coupled oscillator (4x4).  A
transcription of the flow matrix as printed in the literature is kept purely
for comparison: the extracted matrix is authoritative and deviations are
reported entry by entry, not asserted away (the print carries sign defects,
e.g. its (1,1) entry reads 1 + K alpha h^2/2 where the Verlet limit
alpha = 1 requires 1 - K h^2/2).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrators import blended_step
from .models import StateVector, StiffSystem, coupled_oscillator, harmonic_oscillator

__all__ = [
    "LinearFlowReport",
    "harmonic_flow_matrix",
    "harmonic_eigenvalues",
    "harmonic_discriminant",
    "alpha_pm",
    "eigen_report",
    "coupled_flow_matrix",
    "printed_coupled_matrix",
    "CoupledComparison",
    "compare_coupled_matrix",
    "fast_slow_transform",
    "fast_slow_inverse",
    "harmonic_stability_grid",
]


def _probe_matrix(system: StiffSystem, h: float, alpha: float) -> np.ndarray:
    """Flow matrix of the (linear) blended step, one unit vector per column."""
    n = system.n_dof
    dim = 2 * n
    matrix = np.empty((dim, dim))
    for j in range(dim):
        unit = np.zeros(dim)
        unit[j] = 1.0
        out = blended_step(system, StateVector(unit[:n], unit[n:]), h, alpha)
        matrix[:n, j] = out.q
        matrix[n:, j] = out.p
    return matrix


def harmonic_flow_matrix(k: float, h: float, alpha: float) -> np.ndarray:
    """2x2 matrix of the blended step on the harmonic oscillator."""
    return _probe_matrix(harmonic_oscillator(k), h, alpha)


def harmonic_discriminant(kh2: float, alpha: float) -> float:
    """d = (1 + alpha - K h^2 alpha)^2 - 4 alpha; depends on K, h via K h^2."""
    trace = 1.0 + alpha - kh2 * alpha
    return trace**2 - 4.0 * alpha


def harmonic_eigenvalues(kh2: float, alpha: float) -> tuple[complex, complex]:
    """Closed-form eigenvalues of the blended harmonic flow matrix."""
    trace = 1.0 + alpha - kh2 * alpha
    root = np.sqrt(complex(harmonic_discriminant(kh2, alpha)))
    return (complex(0.5 * (trace + root)), complex(0.5 * (trace - root)))


def alpha_pm(kh2: float) -> tuple[float, float]:
    """Blending weights where the eigenvalue pair turns complex.

    Roots of d(alpha) = (K h^2 - 1)^2 alpha^2 - 2 (K h^2 + 1) alpha + 1;
    at K h^2 = 1 the quadratic degenerates and the double value 1/4 is
    returned.
    """
    if kh2 <= 0.0:
        raise ValueError("K h^2 must be positive")
    if kh2 == 1.0:
        return (0.25, 0.25)
    denom = (kh2 - 1.0) ** 2
    root = 2.0 * np.sqrt(kh2)
    return ((kh2 + 1.0 - root) / denom, (kh2 + 1.0 + root) / denom)


@dataclass(frozen=True)
class LinearFlowReport:
    """Eigen-structure of one extracted flow matrix."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    moduli: np.ndarray
    spectral_radius: float
    discriminant: Optional[float] = None


def eigen_report(matrix: np.ndarray) -> LinearFlowReport:
    """Eigenvalues, moduli and spectral radius; discriminant for 2x2 input.

    Eigenvalues are sorted by decreasing modulus (ties by decreasing real
    part) so reports are reproducible.
    """
    matrix = np.asarray(matrix, dtype=float)
    eigs = np.linalg.eigvals(matrix)
    order = np.lexsort((-eigs.real, -np.abs(eigs)))
    eigs = eigs[order]
    moduli = np.abs(eigs)
    disc = None
    if matrix.shape == (2, 2):
        disc = float(np.trace(matrix) ** 2 - 4.0 * np.linalg.det(matrix))
    return LinearFlowReport(
        matrix=matrix,
        eigenvalues=eigs,
        moduli=moduli,
        spectral_radius=float(moduli.max()),
        discriminant=disc,
    )


def coupled_flow_matrix(k: float, h: float, alpha: float) -> np.ndarray:
    """4x4 matrix of the blended step on the coupled oscillator, order (q, p)."""
    return _probe_matrix(coupled_oscillator(k), h, alpha)


def printed_coupled_matrix(k: float, h: float, alpha: float) -> np.ndarray:
    """Literature transcription of the coupled flow matrix (comparison only)."""
    K, a = k, alpha
    return np.array(
        [
            [
                K * a / 2 * h**2 + 1,
                K * a / 2 * h**2 + a * h**2 / 4 - h**2 / 4,
                -K * a / 4 * h**3 + a * h / 4 + 3 * h / 4,
                K * a / 4 * h**3 + a * h**3 / 8 - a * h / 4 - h**3 / 8 + h / 4,
            ],
            [
                K * a / 2 * h**2,
                -K * a / 2 * h**2 - a * h**2 / 4 - h**2 / 4 + 1,
                K * a / 4 * h**3 - a * h / 4 + h / 4,
                -K * a / 4 * h**3 - a * h**3 / 8 + a * h / 4 - h**3 / 8 + 3 * h / 4,
            ],
            [
                -K * a * h,
                K * a * h + a * h / 2 - h / 2,
                -K * a / 2 * h**2 + a / 2 + 1 / 2,
                K * a / 2 * h**2 + a * h**2 / 4 - a / 2 - h**2 / 4 + 1 / 2,
            ],
            [
                K * a * h,
                -K * a * h - a * h / 2 - h / 2,
                K * a / 2 * h**2 - a / 2 + 1 / 2,
                -K * a / 2 * h**2 - a * h**2 / 4 + a / 2 - h**2 / 4 + 1 / 2,
            ],
        ]
    )


@dataclass(frozen=True)
class CoupledComparison:
    extracted: np.ndarray
    printed: np.ndarray
    deviation: np.ndarray
    max_abs_deviation: float


def compare_coupled_matrix(k: float, h: float, alpha: float) -> CoupledComparison:
    """Extracted minus printed coupled flow matrix, deviations reported as data."""
    ours = coupled_flow_matrix(k, h, alpha)
    printed = printed_coupled_matrix(k, h, alpha)
    deviation = ours - printed
    return CoupledComparison(
        extracted=ours,
        printed=printed,
        deviation=deviation,
        max_abs_deviation=float(np.max(np.abs(deviation))),
    )


def fast_slow_transform(z: StateVector) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coupled-oscillator coordinates (x, y, p_x, p_y).

    x = (q1 - q2)/2 is the stiff-spring elongation, y = (q1 + q2)/2 the slow
    center; p_x = p1 - p2 and p_y = p1 + p2 so that dx/dt = p_x/2 and
    dy/dt = p_y/2.  The slow manifold is {x = 0, p_x = 0}.
    """
    if z.q.shape[-1] != 2:
        raise ValueError("fast/slow split is defined for the two-mass oscillator")
    x = 0.5 * (z.q[..., 0] - z.q[..., 1])
    y = 0.5 * (z.q[..., 0] + z.q[..., 1])
    p_x = z.p[..., 0] - z.p[..., 1]
    p_y = z.p[..., 0] + z.p[..., 1]
    return x, y, p_x, p_y


def fast_slow_inverse(x, y, p_x, p_y) -> StateVector:
    """Inverse of `fast_slow_transform`."""
    x, y, p_x, p_y = (np.asarray(v, dtype=float) for v in (x, y, p_x, p_y))
    q = np.stack([y + x, y - x], axis=-1)
    p = np.stack([0.5 * (p_x + p_y), 0.5 * (p_y - p_x)], axis=-1)
    return StateVector(q, p)


def harmonic_stability_grid(
    kh2_values: np.ndarray, alpha_values: np.ndarray
) -> list[dict[str, object]]:
    """Eigenvalue scan rows over a (K h^2, alpha) grid, h fixed to 1.

    Each row carries the moduli of both eigenvalues, the discriminant, a
    node/spiral regime flag and the bifurcation pair of the row's K h^2.
    """
    rows = []
    for kh2 in np.atleast_1d(kh2_values):
        a_minus, a_plus = alpha_pm(float(kh2))
        for alpha in np.atleast_1d(alpha_values):
            report = eigen_report(harmonic_flow_matrix(float(kh2), 1.0, float(alpha)))
            rows.append(
                {
                    "kh2": float(kh2),
                    "alpha": float(alpha),
                    "abs_eig_1": float(report.moduli[0]),
                    "abs_eig_2": float(report.moduli[1]),
                    "discriminant": report.discriminant,
                    "regime": "spiral" if report.discriminant < 0.0 else "node",
                    "alpha_minus": a_minus,
                    "alpha_plus": a_plus,
                }
            )
    return rows
