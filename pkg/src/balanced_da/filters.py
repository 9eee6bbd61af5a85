"""Ensemble analysis steps for linear observations of phase-space states.

States are flattened to z = (q, p) of dimension 2N; an ensemble holds its M
members as rows of an (M, 2N) array.  Observations are y = H z + xi with
isotropic noise covariance R = rho I.

The workhorse is `esrf_analysis`, a deterministic ensemble square-root update
computed in ensemble space with the symmetric inverse square root of

    S = I + (H A)^T R^-1 (H A) / (M - 1),

which reproduces the exact Kalman mean/covariance update for the empirical
forecast covariance.  `kalman_update` implements that exact update directly
and serves as the oracle; `enkf_perturbed_analysis` is the stochastic variant
with perturbed observations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import StateVector

__all__ = [
    "Ensemble",
    "ObservationModel",
    "kalman_update",
    "esrf_analysis",
    "enkf_perturbed_analysis",
    "inflate",
]

_EIG_FLOOR = 1e-12


@dataclass(eq=False)
class Ensemble:
    """M phase-space members as rows of an (M, 2 n_dof) array."""

    members: np.ndarray
    n_dof: int

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim != 2:
            raise ValueError("members must be a 2-D (size, 2 n_dof) array")
        if self.members.shape[1] != 2 * self.n_dof:
            raise ValueError(
                f"member dimension {self.members.shape[1]} does not match 2 * {self.n_dof}"
            )
        if self.members.shape[0] < 2:
            raise ValueError("an ensemble needs at least two members")
        if not np.all(np.isfinite(self.members)):
            raise FloatingPointError("ensemble contains non-finite entries")

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def positions(self) -> np.ndarray:
        """View of the q block, shape (size, n_dof)."""
        return self.members[:, : self.n_dof]

    @property
    def momenta(self) -> np.ndarray:
        """View of the p block, shape (size, n_dof)."""
        return self.members[:, self.n_dof :]

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    def anomalies(self) -> np.ndarray:
        """Centered members, rows summing to zero."""
        return self.members - self.members.mean(axis=0)

    def cov(self) -> np.ndarray:
        """Empirical covariance with 1/(M-1) normalization."""
        A = self.anomalies()
        return A.T @ A / (self.size - 1)

    def to_state(self) -> StateVector:
        return StateVector(self.positions.copy(), self.momenta.copy())

    @classmethod
    def from_state(cls, z: StateVector) -> "Ensemble":
        """Stack a batched state (leading axis = members) into an ensemble."""
        if z.q.ndim != 2:
            raise ValueError("expected a batched state with members on the leading axis")
        return cls(np.concatenate([z.q, z.p], axis=1), z.q.shape[1])


@dataclass(frozen=True)
class ObservationModel:
    """Linear observation operator with isotropic noise and observation interval."""

    H: np.ndarray
    rho: float
    dt_obs: float

    def __post_init__(self):
        object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))
        if self.rho <= 0.0:
            raise ValueError("observation noise variance must be positive")
        if self.dt_obs <= 0.0:
            raise ValueError("observation interval must be positive")

    @property
    def n_obs(self) -> int:
        return self.H.shape[0]

    @property
    def R(self) -> np.ndarray:
        return self.rho * np.eye(self.n_obs)

    @classmethod
    def observe_positions(cls, n_dof: int, rho: float, dt_obs: float) -> "ObservationModel":
        H = np.hstack([np.eye(n_dof), np.zeros((n_dof, n_dof))])
        return cls(H, rho, dt_obs)

    @classmethod
    def observe_momenta(cls, n_dof: int, rho: float, dt_obs: float) -> "ObservationModel":
        H = np.hstack([np.zeros((n_dof, n_dof)), np.eye(n_dof)])
        return cls(H, rho, dt_obs)


def kalman_update(
    mean: np.ndarray, cov: np.ndarray, obs: ObservationModel, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact Kalman mean and covariance update for a linear observation.

    K = P H^T (H P H^T + R)^-1, mean' = mean - K (H mean - y),
    P' = P - K H P (symmetrized against round-off).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = obs.H
    innovation_cov = H @ cov @ H.T + obs.R
    gain = np.linalg.solve(innovation_cov, H @ cov).T
    mean_a = mean - gain @ (H @ mean - y)
    cov_a = cov - gain @ (H @ cov)
    return mean_a, 0.5 * (cov_a + cov_a.T)


def _ensemble_space_factors(ens: Ensemble, obs: ObservationModel, y: np.ndarray):
    """Shift weights w and symmetric transform T of the square-root update."""
    m = ens.size
    A = ens.anomalies()
    Y = A @ obs.H.T  # rows: H applied to each anomaly
    S = np.eye(m) + (Y @ Y.T) / (obs.rho * (m - 1))
    evals, vecs = np.linalg.eigh(S)
    evals = np.maximum(evals, _EIG_FLOOR)
    transform = (vecs * evals**-0.5) @ vecs.T
    s_inv = (vecs / evals) @ vecs.T
    innovation = obs.H @ ens.mean() - np.atleast_1d(np.asarray(y, dtype=float))
    w = -(s_inv @ (Y @ innovation)) / (obs.rho * (m - 1))
    return w, transform


def esrf_analysis(ens: Ensemble, obs: ObservationModel, y: np.ndarray) -> Ensemble:
    """Deterministic square-root analysis of one observation vector.

    Mean and anomalies transform in ensemble space; the update matches
    `kalman_update` applied to the empirical statistics, and the posterior
    anomalies keep zero row-sums.
    """
    A = ens.anomalies()
    w, transform = _ensemble_space_factors(ens, obs, y)
    mean_a = ens.mean() + w @ A
    members = mean_a + transform @ A
    return Ensemble(members, ens.n_dof)


def enkf_perturbed_analysis(
    ens: Ensemble, obs: ObservationModel, y: np.ndarray, rng: np.random.Generator
) -> Ensemble:
    """Stochastic analysis: every member sees the observation plus fresh noise.

    Uses the empirical gain K = P H^T (H P H^T + R)^-1 and updates
    z_i <- z_i - K (H z_i + xi_i - y), xi_i ~ N(0, R).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = obs.H
    cov = ens.cov()
    innovation_cov = H @ cov @ H.T + obs.R
    gain = np.linalg.solve(innovation_cov, H @ cov).T
    noise = np.sqrt(obs.rho) * rng.standard_normal((ens.size, obs.n_obs))
    innovations = ens.members @ H.T + noise - y
    return Ensemble(ens.members - innovations @ gain.T, ens.n_dof)


def inflate(ens: Ensemble, factor: float) -> Ensemble:
    """Scale anomalies about the mean: z_i <- mean + factor (z_i - mean)."""
    if factor <= 0.0:
        raise ValueError("inflation factor must be positive")
    if factor == 1.0:
        return Ensemble(ens.members.copy(), ens.n_dof)
    mean = ens.mean()
    return Ensemble(mean + factor * (ens.members - mean), ens.n_dof)
