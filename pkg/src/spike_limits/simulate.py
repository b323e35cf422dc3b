"""Synthetic data, sample matrices and the normalized spike statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateVariance, DomainError, NumericalError

NU4 = {"gaussian": 0.0, "rademacher": -2.0, "uniform": -1.2, "laplace": 3.0}


@dataclass(frozen=True)
class SourceDistribution:
    """Standardized (mean 0, variance 1) source law for the entries of X."""

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in NU4:
            raise DomainError(f"unknown source distribution {self.kind!r}; choose from {sorted(NU4)}")

    @property
    def nu4(self) -> float:
        """Fourth cumulant E x^4 - 3."""
        return NU4[self.kind]


def derive_seed(master_seed: int, rep_index: int) -> int:
    """Per-replication seed, independent of execution order."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(rep_index),))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def draw_source(p: int, n: int, dist: SourceDistribution | str, seed: int) -> np.ndarray:
    """p x n matrix of i.i.d. standardized entries from a Philox counter stream."""
    if p < 1 or n < 1:
        raise DomainError("p and n must be positive")
    if isinstance(dist, str):
        dist = SourceDistribution(dist)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    shape = (p, n)
    if dist.kind == "gaussian":
        return rng.standard_normal(shape)
    if dist.kind == "rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    if dist.kind == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
    return rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=shape)


def observe(model, X: np.ndarray) -> np.ndarray:
    """Y = G X."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != model.p:
        raise DomainError(f"X has {X.shape[0]} rows, model has p={model.p}")
    return np.asarray(model.G) @ X


def sample_cov(Y: np.ndarray, n: int | None = None) -> np.ndarray:
    """S = Y Y^T / n (no centering), symmetrized."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = Y.shape[1] if n is None else int(n)
    if n < 1:
        raise DomainError("n must be positive")
    S = Y @ Y.T / n
    return (S + S.T) / 2


def sample_corr(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    d = np.diag(S)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise DegenerateVariance("sample covariance has a nonpositive diagonal entry")
    s = 1.0 / np.sqrt(d)
    R = S * s[:, None] * s[None, :]
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    return R


def extract_spiked(matrix: np.ndarray, spikes) -> tuple[np.ndarray, np.ndarray]:
    """Top-M eigenpairs, descending, with the largest-magnitude entry of each vector positive."""
    A = np.asarray(matrix, dtype=float)
    p = A.shape[0]
    M = spikes if isinstance(spikes, int) else spikes.M
    try:
        w, Z = scipy.linalg.eigh(A, subset_by_index=[p - M, p - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    w, Z = w[::-1], Z[:, ::-1]
    idx = np.argmax(np.abs(Z), axis=0)
    signs = np.sign(Z[idx, np.arange(M)])
    signs[signs == 0] = 1.0
    return w.copy(), Z * signs


def eig_stat(lam, phi, n: int):
    """theta = sqrt(n)(lambda/phi - 1)."""
    return np.sqrt(n) * (np.asarray(lam) / phi - 1.0)


def vec_stat(Z: np.ndarray, I_k, P: np.ndarray) -> float:
    """P^T (sum_{j in I_k} z_j z_j^T) P."""
    c = np.asarray(Z)[:, np.asarray(I_k)].T @ np.asarray(P)
    return float(c @ c)


@dataclass
class ReplicationRecord:
    rep_index: int
    kind: str
    lam: np.ndarray
    theta: np.ndarray
    proj_stat: dict
    seed_used: int


def replicate(model, n: int, dist: SourceDistribution, kinds, projections: dict, phis, seed: int):
    """One replication; returns a record per matrix kind from the same data."""
    X = draw_source(model.p, n, dist, seed)
    S = sample_cov(observe(model, X), n)
    out = {}
    for kind in kinds:
        A = S if kind == "covariance_matrix" else sample_corr(S)
        lam, Z = extract_spiked(A, model.spikes)
        theta = np.concatenate(
            [eig_stat(lam[idx], phis[k], n) for k, idx in enumerate(model.spikes.index_sets)]
        )
        proj = {
            (name, k): vec_stat(Z, idx, P)
            for name, P in projections.items()
            for k, idx in enumerate(model.spikes.index_sets)
        }
        out[kind] = (lam, theta, proj)
    return out
