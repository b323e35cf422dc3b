"""Generalized spiked population models.

A model is the factorization ``G = V diag(sqrt(lambda)) U^T`` of a p x p
matrix whose Gram matrix ``R = G G^T`` is either a covariance matrix or, in
correlation mode, a correlation matrix (unit diagonal).  The first ``M``
columns of ``V`` and ``U`` carry the spikes, the remaining ``p - M`` the bulk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    InputError,
    MultiplicityError,
    NotACorrelationModel,
    SeparationError,
)

MODES = ("covariance", "correlation")
STRUCTURES = ("identity_embedding", "random_orthogonal", "equal_weight_leading")
DEFAULT_SEPARATION = 0.05
SCHEMA = "model_v1"

_ORTHO_TOL = 1e-10
_DIAG_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BulkSpectrum:
    """Discrete spectral distribution: ``atoms`` with probability ``weights``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.shape != weights.shape or atoms.ndim != 1 or atoms.size == 0:
            raise DomainError("atoms and weights must be non-empty 1-d arrays of equal length")
        if not np.all(np.isfinite(atoms)) or np.any(atoms < 0):
            raise DomainError("atoms must be finite and nonnegative")
        if np.any(np.diff(atoms) < 0):
            raise DomainError("atoms must be sorted in nondecreasing order")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be positive and sum to 1")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def point_mass(cls, t: float = 1.0) -> "BulkSpectrum":
        return cls(np.array([t]), np.array([1.0]))

    @classmethod
    def from_eigenvalues(cls, values: Iterable[float]) -> "BulkSpectrum":
        """Empirical spectral distribution of a list of eigenvalues."""
        values = np.asarray(list(values), dtype=float)
        if values.size == 0:
            raise DomainError("empty eigenvalue list")
        atoms, counts = np.unique(values, return_counts=True)
        return cls(atoms, counts / values.size)

    @property
    def max_atom(self) -> float:
        return float(self.atoms[-1])

    def __eq__(self, other):
        if not isinstance(other, BulkSpectrum):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True)
class SpikeSet:
    """Distinct spike values in decreasing order, each with a multiplicity."""

    spikes: tuple

    def __post_init__(self):
        items = []
        for s in self.spikes:
            if isinstance(s, dict):
                alpha, mult = s["alpha"], s.get("mult", 1)
            else:
                alpha, mult = s
            if int(mult) != mult or mult < 1:
                raise DomainError(f"multiplicity must be a positive integer, got {mult}")
            alpha = float(alpha)
            if not np.isfinite(alpha) or alpha <= 0:
                raise DomainError(f"spike must be positive and finite, got {alpha}")
            items.append((alpha, int(mult)))
        if not items:
            raise DomainError("at least one spike is required")
        alphas = [a for a, _ in items]
        if any(a2 >= a1 for a1, a2 in zip(alphas, alphas[1:])):
            raise DomainError("spike values must be strictly decreasing")
        object.__setattr__(self, "spikes", tuple(items))

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.spikes])

    @property
    def mults(self) -> list[int]:
        return [m for _, m in self.spikes]

    @property
    def K(self) -> int:
        return len(self.spikes)

    @property
    def M(self) -> int:
        return sum(self.mults)

    @property
    def index_sets(self) -> list[np.ndarray]:
        """0-based consecutive ranks owned by each spike group."""
        out, start = [], 0
        for m in self.mults:
            out.append(np.arange(start, start + m))
            start += m
        return out

    def expanded(self) -> np.ndarray:
        """Spike values repeated by multiplicity (the diagonal of Lambda_s)."""
        return np.repeat(self.alphas, self.mults)

    def min_ratio_gap(self) -> float:
        a = self.alphas
        if a.size < 2:
            return float("inf")
        gaps = [abs(a[k] / a[j] - 1.0) for k in range(a.size) for j in range(a.size) if j != k]
        return float(min(gaps))

    def to_json(self) -> list[dict]:
        return [{"alpha": a, "mult": m} for a, m in self.spikes]


def _sign_fix(Q: np.ndarray) -> np.ndarray:
    """Flip columns so the first nonzero entry of each is positive."""
    Q = Q.copy()
    for j in range(Q.shape[1]):
        nz = np.flatnonzero(np.abs(Q[:, j]) > 1e-14)
        if nz.size and Q[nz[0], j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


def _orthonormalize(Z: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(Z)
    return _sign_fix(Q)


@dataclass(frozen=True, eq=False)
class PopulationModel:
    p: int
    mode: str
    V: np.ndarray
    U: np.ndarray
    lambda_s: np.ndarray
    lambda_b: np.ndarray
    spikes: SpikeSet
    structure: str = "identity_embedding"
    seed: int | None = None
    # Build inputs, kept so the model serializes without its matrices.
    inputs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("V", "U", "lambda_s", "lambda_b"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def M(self) -> int:
        return self.spikes.M

    @property
    def K(self) -> int:
        return self.spikes.K

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([self.lambda_s, self.lambda_b])

    @cached_property
    def G(self) -> np.ndarray:
        return _frozen(self.V * np.sqrt(self.eigenvalues) @ self.U.T)

    @cached_property
    def G_b(self) -> np.ndarray:
        M = self.M
        return _frozen(self.V[:, M:] * np.sqrt(self.lambda_b) @ self.U[:, M:].T)

    @cached_property
    def R(self) -> np.ndarray:
        R = self.V * self.eigenvalues @ self.V.T
        R = (R + R.T) / 2
        if self.mode == "correlation":
            np.fill_diagonal(R, 1.0)
        return _frozen(R)

    @cached_property
    def R_b(self) -> np.ndarray:
        Vb = self.V[:, self.M:]
        R = Vb * self.lambda_b @ Vb.T
        return _frozen((R + R.T) / 2)

    @property
    def Sigma(self) -> np.ndarray:
        return self.R

    def V_group(self, k: int) -> np.ndarray:
        return self.V[:, self.spikes.index_sets[k]]

    def U_group(self, k: int) -> np.ndarray:
        return self.U[:, self.spikes.index_sets[k]]

    def bulk_esd(self) -> BulkSpectrum:
        return bulk_esd(self)

    def to_json(self) -> dict:
        return model_to_json(self)


def build_equicorrelation(p: int, rho: float) -> PopulationModel:
    """Correlation model ``(1 - rho) I + rho 11^T`` with its single spike."""
    if p < 2:
        raise DomainError(f"p must be at least 2, got {p}")
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    alpha = 1.0 + (p - 1) * rho
    return build_general(
        p,
        SpikeSet(((alpha, 1),)),
        [1.0 - rho] * (p - 1),
        seed=0,
        mode="correlation",
        structure="equal_weight_leading",
    )


def build_general(
    p: int,
    spikes: SpikeSet | Sequence,
    bulk_eigs: Sequence[float],
    seed: int | None = 0,
    mode: str = "covariance",
    structure: str = "identity_embedding",
    separation: float = DEFAULT_SEPARATION,
) -> PopulationModel:
    """Assemble a population model from its spectrum and a factor structure.

    ``identity_embedding`` puts the spike directions on the first M
    coordinates; ``random_orthogonal`` draws V and U independently from a
    seeded Gaussian matrix; ``equal_weight_leading`` uses V_1 = 1/sqrt(p) and
    U = V.  In correlation mode the random structure rescales the rows of G
    to unit norm and re-extracts the spectrum, so the stored spikes are the
    eigenvalues of the normalized model.
    """
    if not isinstance(spikes, SpikeSet):
        spikes = SpikeSet(tuple(spikes))
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}")
    if structure not in STRUCTURES:
        raise InputError(f"unknown structure {structure!r}")
    p = int(p)
    bulk = np.asarray(bulk_eigs, dtype=float)
    M = spikes.M
    if bulk.shape != (p - M,):
        raise DomainError(f"expected {p - M} bulk eigenvalues, got {bulk.size}")
    if M >= p:
        raise DomainError("number of spikes must be smaller than p")
    if np.any(bulk < 0) or not np.all(np.isfinite(bulk)):
        raise DomainError("bulk eigenvalues must be finite and nonnegative")
    inputs = {
        "p": p,
        "mode": mode,
        "spikes": spikes.to_json(),
        "bulk": bulk.tolist(),
        "structure": structure,
        "seed": seed,
    }
    if separation != DEFAULT_SEPARATION:
        inputs["separation"] = separation
    if spikes.min_ratio_gap() <= separation:
        raise SeparationError(
            f"spike ratio gap {spikes.min_ratio_gap():.4g} does not exceed d={separation}"
        )

    lam = np.concatenate([spikes.expanded(), bulk])
    rng = np.random.default_rng(seed)
    if structure == "identity_embedding":
        V = np.eye(p)
        U = np.eye(p)
    elif structure == "random_orthogonal":
        V = _orthonormalize(rng.standard_normal((p, p)))
        U = _orthonormalize(rng.standard_normal((p, p)))
    else:
        Z = np.column_stack([np.ones(p), rng.standard_normal((p, p - 1))])
        V = _orthonormalize(Z)
        V[:, 0] = 1.0 / np.sqrt(p)
        U = V

    if mode == "correlation" and structure == "random_orthogonal":
        if any(m > 1 for m in spikes.mults):
            raise MultiplicityError("row normalization of a random model splits repeated spikes")
        G = V * np.sqrt(lam) @ U.T
        G = G / np.linalg.norm(G, axis=1)[:, None]
        V, s, Ut = np.linalg.svd(G)
        U = Ut.T
        flip = np.ones(p)
        for j in range(p):
            nz = np.flatnonzero(np.abs(V[:, j]) > 1e-14)
            if nz.size and V[nz[0], j] < 0:
                flip[j] = -1.0
        V, U = V * flip, U * flip
        lam = s**2
        spikes = SpikeSet(tuple((float(a), 1) for a in lam[:M]))
        if spikes.min_ratio_gap() <= separation:
            raise SeparationError("normalized spikes are not separated")

    model = PopulationModel(
        p=p,
        mode=mode,
        V=V,
        U=U,
        lambda_s=lam[:M],
        lambda_b=lam[M:],
        spikes=spikes,
        structure=structure,
        seed=seed,
        inputs=inputs,
    )
    if mode == "correlation":
        raw_diag = np.einsum("ij,j,ij->i", model.V, model.eigenvalues, model.V)
        worst = float(np.max(np.abs(raw_diag - 1.0)))
        if worst > _DIAG_TOL:
            raise NotACorrelationModel(f"max |diag(R) - 1| = {worst:.3g}")
    return model


def bulk_esd(model: PopulationModel) -> BulkSpectrum:
    """ESD of the p - M bulk eigenvalues (the M structural zeros of R_b are excluded)."""
    return BulkSpectrum.from_eigenvalues(model.lambda_b)


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, passed in self.checks.items() if not passed]

    def to_json(self) -> dict:
        return {"ok": self.ok, "checks": dict(self.checks), "details": dict(self.details)}


def validate(model: PopulationModel, n: int, d: float = DEFAULT_SEPARATION) -> ValidationReport:
    """Check the model against the working assumptions at sample size ``n``."""
    from .rmt import check_separation

    if n < 1:
        raise DomainError("n must be positive")
    rep = ValidationReport()
    eye = np.eye(model.p)
    for name, Q in (("V", model.V), ("U", model.U)):
        err = float(np.max(np.abs(Q.T @ Q - eye)))
        rep.checks[f"orthonormal_{name}"] = err <= _ORTHO_TOL
        rep.details[f"orthonormal_{name}"] = err
    if model.mode == "correlation":
        raw_diag = np.einsum("ij,j,ij->i", model.V, model.eigenvalues, model.V)
        err = float(np.max(np.abs(raw_diag - 1.0)))
        rep.checks["unit_diagonal"] = err <= _ORTHO_TOL
        rep.details["unit_diagonal"] = err
    bulk_norm = float(np.max(model.lambda_b)) if model.lambda_b.size else 0.0
    smallest_spike = float(model.spikes.alphas[-1])
    rep.checks["bulk_bounded"] = bool(np.isfinite(bulk_norm) and bulk_norm < smallest_spike)
    rep.details["bulk_bounded"] = {"norm_R_b": bulk_norm, "smallest_spike": smallest_spike}

    sep = check_separation(model.spikes, bulk_esd(model), model.p / n, d)
    for k, item in enumerate(sep.per_spike):
        rep.checks[f"phi_prime_spike_{k + 1}"] = item["above_transition"]
        rep.details[f"phi_prime_spike_{k + 1}"] = item
    rep.checks["ratio_gap"] = sep.gap_ok
    rep.details["ratio_gap"] = {"min_gap": sep.min_gap, "d": d}
    return rep


def model_to_json(model: PopulationModel) -> dict:
    doc = {"schema": SCHEMA}
    doc.update(model.inputs)
    return doc


def model_from_json(doc: dict | str) -> PopulationModel:
    """Rebuild a model from its JSON document; matrices are re-derived."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed model JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("model document must be a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise InputError(f"unsupported model schema {schema!r}")
    try:
        p = int(doc["p"])
        spikes = SpikeSet(tuple(doc["spikes"]))
        bulk = doc["bulk"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"incomplete model document: {exc}") from exc
    return build_general(
        p,
        spikes,
        bulk,
        seed=doc.get("seed", 0),
        mode=doc.get("mode", "covariance"),
        structure=doc.get("structure", "identity_embedding"),
        separation=float(doc.get("separation", DEFAULT_SEPARATION)),
    )
