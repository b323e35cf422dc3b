"""Scalar random-matrix functions for a discrete bulk spectrum.

For a bulk ``H = sum_i w_i delta_{t_i}`` and aspect ratio ``y = p/n``::

    phi(a) = a (1 + y sum_i w_i t_i / (a - t_i)),   psi(a) = phi(a) / a

maps a population spike to the almost-sure limit of its sample eigenvalue.
Every integral against H is an exact weighted sum over atoms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import BelowPhaseTransition, DomainError, SolverError

DAMPING = 0.5
MAX_ITER = 10_000
STEP_TOL = 1e-12
RESIDUAL_TOL = 1e-10
PHI1_FLOOR = 1e-12


@dataclass(frozen=True)
class StieltjesSolution:
    z: complex
    s: complex
    s_under: complex
    residual: float
    iterations: int


@dataclass(frozen=True)
class RmtPoint:
    alpha: float
    y: float
    phi: float
    phi1: float
    phi2: float
    phi3: float
    psi: float
    psi1: float
    s_under: float
    l0: float
    l0p: float
    l1: float
    l2: float

    def to_json(self) -> dict:
        return asdict(self)


def _fixed_point_map(s, z, atoms, weights, y):
    return np.sum(weights / (atoms * (1.0 - y - y * z * s) - z))


def stieltjes_residual(s: complex, z: complex, H, y: float) -> float:
    return float(abs(s - _fixed_point_map(s, z, H.atoms, H.weights, y)))


def solve_stieltjes(z: complex, H, y: float) -> StieltjesSolution:
    """Solve ``s = int dH(t) / (t (1 - y - y z s) - z)`` for Im z > 0.

    Damped fixed-point iteration started from the population resolvent,
    then polished with Newton steps on the same equation.  The returned
    branch has Im s_under > 0.
    """
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("solve_stieltjes needs Im z > 0")
    if not y > 0:
        raise DomainError("aspect ratio y must be positive")
    t, w = H.atoms, H.weights
    s = complex(np.sum(w / (t - z)))
    it = 0
    for it in range(1, MAX_ITER + 1):
        s_new = (1.0 - DAMPING) * s + DAMPING * _fixed_point_map(s, z, t, w, y)
        if not np.isfinite(s_new):
            break
        step = abs(s_new - s)
        s = s_new
        if step <= STEP_TOL * max(1.0, abs(s)):
            break
    # Newton polish: f(s) = s - sum w / (t(1-y-yzs) - z)
    for _ in range(50):
        den = t * (1.0 - y - y * z * s) - z
        f = s - np.sum(w / den)
        fp = 1.0 - np.sum(w * t * y * z / den**2)
        if fp == 0 or not np.isfinite(fp):
            break
        ds = f / fp
        s = s - ds
        if abs(ds) <= 1e-16 * max(1.0, abs(s)):
            break
    res = stieltjes_residual(s, z, H, y)
    s_under = -(1.0 - y) / z + y * s
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise SolverError(f"Stieltjes iteration did not converge at z={z}", residual=res)
    if not s_under.imag > 0:
        raise SolverError(f"converged to the wrong branch at z={z}", residual=res)
    return StieltjesSolution(z=z, s=complex(s), s_under=complex(s_under), residual=res, iterations=it)


def _moments(alpha: float, H, y: float):
    t, w = H.atoms, H.weights
    d = alpha - t
    ywt2 = y * w * t**2
    phi = alpha * (1.0 + np.sum(y * w * t / d))
    phi1 = 1.0 - np.sum(ywt2 / d**2)
    phi2 = 2.0 * np.sum(ywt2 / d**3)
    phi3 = -6.0 * np.sum(ywt2 / d**4)
    psi1 = -np.sum(y * w * t / d**2)
    return float(phi), float(phi1), float(phi2), float(phi3), float(psi1)


def phi_value(alpha: float, H, y: float) -> float:
    """phi(alpha) without the phase-transition guard (used by grid checks)."""
    if alpha <= H.max_atom:
        raise DomainError(f"alpha={alpha} is not above the bulk support (max atom {H.max_atom})")
    return _moments(alpha, H, y)[0]


def phi_suite(alpha: float, H, y: float) -> RmtPoint:
    """Evaluate phi, psi, their derivatives and the L-functions at a spike."""
    alpha = float(alpha)
    if not y > 0:
        raise DomainError("aspect ratio y must be positive")
    if not alpha > H.max_atom:
        raise DomainError(f"alpha={alpha} is not above the bulk support (max atom {H.max_atom})")
    phi, phi1, phi2, phi3, psi1 = _moments(alpha, H, y)
    if phi1 <= PHI1_FLOOR:
        raise BelowPhaseTransition(
            f"spike alpha={alpha:g} is below the phase transition (phi'={phi1:.6g})", alpha=alpha
        )
    psi = phi / alpha
    l0 = phi1 / psi
    l0p = (phi2 * psi - phi1 * psi1) / psi**2
    l1 = alpha * phi2 / (phi * phi1)
    l2 = l0p**2 / phi1 - l0p * l1 + (3.0 * phi2**2 - phi1 * phi3) / (6.0 * psi**2 * phi1)
    return RmtPoint(
        alpha=alpha,
        y=float(y),
        phi=phi,
        phi1=phi1,
        phi2=phi2,
        phi3=phi3,
        psi=psi,
        psi1=psi1,
        s_under=-1.0 / alpha,
        l0=l0,
        l0p=l0p,
        l1=l1,
        l2=l2,
    )


@dataclass
class SeparationReport:
    per_spike: list
    min_gap: float
    d: float
    gap_ok: bool

    @property
    def ok(self) -> bool:
        return self.gap_ok and all(item["above_transition"] for item in self.per_spike)


def check_separation(spikes, H, y: float, d: float = 0.05) -> SeparationReport:
    per = []
    for k, alpha in enumerate(spikes.alphas):
        item = {"spike": k + 1, "alpha": float(alpha), "phi1": None, "above_transition": False}
        if alpha > H.max_atom:
            phi1 = _moments(float(alpha), H, y)[1]
            item["phi1"] = phi1
            item["above_transition"] = bool(phi1 > PHI1_FLOOR)
        per.append(item)
    gap = spikes.min_ratio_gap()
    return SeparationReport(per_spike=per, min_gap=gap, d=d, gap_ok=bool(gap > d))


def s_under_real(x: float, H, y: float, eps: tuple = (1e-3, 5e-4, 2.5e-4)) -> tuple[float, float]:
    """Real-axis value and derivative of the companion transform outside the support.

    Evaluates the complex solver at ``x + i eps`` and removes the O(eps^2)
    error by Richardson extrapolation.  Re s(x+ie) = s(x) + O(e^2) and
    Im s(x+ie)/e = s'(x) + O(e^2).
    """
    vals = [solve_stieltjes(complex(x, e), H, y).s_under for e in eps]
    re = [v.real for v in vals]
    der = [v.imag / e for v, e in zip(vals, eps)]
    return _richardson(re, eps), _richardson(der, eps)


def _richardson(values, eps):
    # polynomial fit in eps^2 evaluated at 0
    x = np.asarray(eps, dtype=float) ** 2
    coef = np.polyfit(x, np.asarray(values, dtype=float), len(x) - 1)
    return float(coef[-1])
