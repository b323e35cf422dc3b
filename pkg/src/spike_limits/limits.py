"""First-order limits and CLT parameters for spiked eigenvalues and eigenvectors.

All limiting quantities are finite-n plug-ins: the bulk spectrum is the ESD
of the model's bulk eigenvalues and the aspect ratio is ``y_n = p / n``.

Two matrix kinds are supported.  ``covariance_matrix`` refers to the sample
covariance S and uses the population factor (Gamma, Sigma); for a model
built in correlation mode this is the same matrix as (G, R).
``correlation_matrix`` refers to the sample correlation matrix and adds the
terms produced by the diagonal normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BelowPhaseTransition, DomainError, MultiplicityError, ScopeError, SeparationError
from .model import PopulationModel, bulk_esd
from .rmt import RmtPoint, phi_suite

KINDS = ("covariance_matrix", "correlation_matrix")
_KIND_ALIASES = {
    "covariance": "covariance_matrix",
    "covariance_matrix": "covariance_matrix",
    "cov": "covariance_matrix",
    "S": "covariance_matrix",
    "correlation": "correlation_matrix",
    "correlation_matrix": "correlation_matrix",
    "corr": "correlation_matrix",
    "R": "correlation_matrix",
}

TERM_LABELS = (
    "V11", "V12", "V13", "V14", "V15", "V16",
    "V22", "V23", "V24", "V25", "V26",
    "V33", "V34", "V35", "V36",
    "V44", "V45", "V46",
    "V55", "V56",
    "V66",
)
COVARIANCE_TERMS = ("V11", "V12", "V13", "V22", "V23", "V33")


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise DomainError(f"unknown matrix kind {kind!r}") from None


def rmt_point(model: PopulationModel, n: int, k: int) -> RmtPoint:
    """phi_suite at spike group ``k`` (0-based) with finite-n plug-ins."""
    if not 0 <= k < model.K:
        raise DomainError(f"spike index {k} out of range for {model.K} spike groups")
    if n < 1:
        raise DomainError("n must be positive")
    alpha = float(model.spikes.alphas[k])
    try:
        return phi_suite(alpha, bulk_esd(model), model.p / n)
    except BelowPhaseTransition as exc:
        raise BelowPhaseTransition(
            f"spike {k + 1} (alpha={alpha:g}) is below the phase transition at y={model.p / n:g}",
            alpha=alpha,
            spike=k + 1,
        ) from exc


def eigenvalue_limit(model: PopulationModel, n: int, k: int) -> float:
    return rmt_point(model, n, k).phi


def _sq(x: np.ndarray) -> np.ndarray:
    return x * x


@dataclass
class _Mats:
    """Matrices shared by the CLT formulas, with G^{o2} = G o G."""

    G: np.ndarray
    GG: np.ndarray
    R: np.ndarray
    Rfrak: np.ndarray


def _mats(model: PopulationModel, nu4: float) -> _Mats:
    G = np.asarray(model.G)
    R = np.asarray(model.R)
    GG = G * G
    return _Mats(G=G, GG=GG, R=R, Rfrak=rfrak(model, nu4))


def rfrak(model: PopulationModel, nu4: float) -> np.ndarray:
    """2 (R o R) + nu4 (G o G)(G o G)^T."""
    G = np.asarray(model.G)
    R = np.asarray(model.R)
    GG = G * G
    return 2.0 * R * R + nu4 * (GG @ GG.T)


def _g_cov(model, mats, pts, kind, nu4, cols1, cols2, grp1, grp2):
    """Cov(G_{ab}, G_{cd}) for (a, b) in group grp1 and (c, d) in group grp2."""
    a, b = cols1
    c, d = cols2
    U, V = model.U, model.V
    l0 = pts[grp1].l0 * pts[grp2].l0
    Uab = U[:, a] * U[:, b]
    Ucd = U[:, c] * U[:, d]
    val = nu4 * (Uab @ Ucd)
    if grp1 == grp2:
        val += (float(a == c and b == d) + float(a == d and b == c)) / pts[grp1].phi1
    if kind == "correlation_matrix":
        Vab = V[:, a] * V[:, b]
        Vcd = V[:, c] * V[:, d]
        alpha_sum = pts[grp1].alpha + pts[grp2].alpha
        val += -2.0 * alpha_sum * (Vab @ Vcd)
        val += -nu4 * (Vcd @ mats.GG @ Uab + Vab @ mats.GG @ Ucd)
        val += Vab @ mats.Rfrak @ Vcd
    return l0 * val


@dataclass
class CltBlock:
    kind: str
    k: int
    cov: np.ndarray
    nu4: float

    @property
    def m(self) -> int:
        return self.cov.shape[0]

    def matricize(self) -> np.ndarray:
        m = self.m
        return self.cov.reshape(m * m, m * m)

    def var_diag(self, i: int = 0) -> float:
        return float(self.cov[i, i, i, i])

    def to_json(self) -> dict:
        return {"spike_k": self.k + 1, "kind": self.kind, "nu4": self.nu4, "cov": self.cov.tolist()}


def eigenvalue_clt_block(
    model: PopulationModel, n: int, k: int, kind: str = "covariance_matrix", nu4: float = 0.0
) -> CltBlock:
    """Covariance tensor of the Gaussian block limiting the spike group ``k``.

    The sample eigenvalues of group k, normalized as sqrt(n)(lambda/phi - 1),
    converge jointly to the eigenvalues of the symmetric m_k x m_k Gaussian
    matrix whose entries have these covariances.
    """
    kind = normalize_kind(kind)
    pts = {k: rmt_point(model, n, k)}
    mats = _mats(model, nu4) if kind == "correlation_matrix" else None
    cols = model.spikes.index_sets[k]
    m = cols.size
    cov = np.empty((m, m, m, m))
    for i in range(m):
        for j in range(i, m):
            for q in range(m):
                for r in range(q, m):
                    v = _g_cov(model, mats, pts, kind, nu4, (cols[i], cols[j]), (cols[q], cols[r]), k, k)
                    cov[i, j, q, r] = cov[j, i, q, r] = cov[i, j, r, q] = cov[j, i, r, q] = v
    cov = (cov + cov.transpose(2, 3, 0, 1)) / 2
    return CltBlock(kind=kind, k=k, cov=cov, nu4=float(nu4))


def simple_spike_joint_cov(
    model: PopulationModel, n: int, kind: str = "covariance_matrix", nu4: float = 0.0
) -> np.ndarray:
    """K x K covariance of the limits of theta_1..theta_K for simple spikes."""
    kind = normalize_kind(kind)
    if any(m > 1 for m in model.spikes.mults):
        raise MultiplicityError("joint covariance requires all spikes to be simple")
    K = model.K
    pts = {k: rmt_point(model, n, k) for k in range(K)}
    mats = _mats(model, nu4) if kind == "correlation_matrix" else None
    C = np.empty((K, K))
    for i in range(K):
        for j in range(i, K):
            C[i, j] = C[j, i] = _g_cov(model, mats, pts, kind, nu4, (i, i), (j, j), i, j)
    return C


@dataclass
class ProjectionContext:
    P: np.ndarray
    tau: np.ndarray
    T_G: list
    T_R: list
    Gb_P: np.ndarray

    def tau2(self, model: PopulationModel, k: int) -> float:
        return float(np.sum(self.tau[model.spikes.index_sets[k]] ** 2))


def projection_context(model: PopulationModel, P) -> ProjectionContext:
    P = np.asarray(P, dtype=float).reshape(-1)
    if P.shape != (model.p,):
        raise DomainError(f"projection must have length {model.p}")
    norm = np.linalg.norm(P)
    if abs(norm - 1.0) > 1e-12:
        raise DomainError(f"projection vector must be unit length (norm {norm:.15g})")
    tau = model.V.T @ P
    T_G, T_R = [], []
    for idx in model.spikes.index_sets:
        Vk = model.V[:, idx]
        Uk = model.U[:, idx]
        coef = Vk.T @ P
        T_G.append(Uk @ coef)
        T_R.append(Vk @ coef)
    return ProjectionContext(P=P, tau=tau, T_G=T_G, T_R=T_R, Gb_P=np.asarray(model.G_b).T @ P)


def eigvec_limit(model: PopulationModel, n: int, P, k: int) -> float:
    """Limit of P^T (sum_{j in I_k} z_j z_j^T) P, i.e. L0(alpha_k) sum_{j in I_k} tau_j^2."""
    ctx = P if isinstance(P, ProjectionContext) else projection_context(model, P)
    return rmt_point(model, n, k).l0 * ctx.tau2(model, k)


@dataclass
class EigvecVariance:
    kind: str
    k: int
    sigma2: float
    terms: dict
    nu4: float
    Rfrak: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "spike_k": self.k + 1,
            "kind": self.kind,
            "sigma2": self.sigma2,
            "terms": dict(self.terms),
            "nu4": self.nu4,
        }


def _sum_terms(terms: dict) -> float:
    total = 0.0
    for label, v in terms.items():
        total += v if label[1] == label[2] else 2.0 * v
    return total


def eigvec_variance(
    model: PopulationModel, n: int, P, k: int, kind: str = "covariance_matrix", nu4: float = 0.0
) -> EigvecVariance:
    """Limiting variance of sqrt(n)(P_s^T P_s - L0 sum tau^2) for spike group ``k``."""
    kind = normalize_kind(kind)
    ctx = P if isinstance(P, ProjectionContext) else projection_context(model, P)
    alphas = model.spikes.alphas
    i = k
    a = float(alphas[i])
    others = [j for j in range(model.K) if j != i]
    for j in others:
        if abs(a - alphas[j]) < 1e-8 * a:
            raise SeparationError(f"spikes {i + 1} and {j + 1} coincide; variance is undefined")
    pt = rmt_point(model, n, i)
    L0, L0p, L2, psi, phi1 = pt.l0, pt.l0p, pt.l2, pt.psi, pt.phi1
    c5 = L0 + a * L0p
    G = np.asarray(model.G)
    GG = G * G
    Rf = rfrak(model, nu4)
    Pv = ctx.P
    TRi, TGi = ctx.T_R[i], ctx.T_G[i]
    GTGi = G @ TGi
    GbP = ctx.Gb_P
    TRiP = TRi * Pv
    TRiTRi = TRi * TRi
    TGiTGi = TGi * TGi
    trr = TRi @ TRi
    # weights 1/(a - alpha_j) for the other groups
    inv = {j: 1.0 / (a - alphas[j]) for j in others}
    sq = {j: np.sqrt(alphas[j]) for j in others}

    def hform(x, g1, g2):
        # 2 x^T (g1 o g2) + nu4 x^T (G o G)(TG-like pair)
        return 2.0 * (x @ (g1[0] * g1[1])) + nu4 * (x @ GG @ (g2[0] * g2[1]))

    t = {}
    t["V11"] = 2.0 * a**2 * L2 * trr**2 + nu4 * a**2 * L0p**2 * np.sum(TGiTGi**2)
    t["V12"] = sum(
        2.0 * nu4 * a**1.5 * sq[j] * L0 * L0p * inv[j] * (TGiTGi @ (TGi * ctx.T_G[j])) for j in others
    )
    t["V13"] = -2.0 * nu4 * np.sqrt(a) * L0 * L0p * (TGiTGi @ (TGi * GbP))
    v22 = 0.0
    for j1 in others:
        for j2 in others:
            v22 += (
                4.0 * L0**2 * a * sq[j1] * sq[j2] * inv[j1] * inv[j2]
                * ((TGi @ TGi) * (ctx.T_G[j1] @ ctx.T_G[j2]) / phi1
                   + nu4 * ((TGi * ctx.T_G[j1]) @ (TGi * ctx.T_G[j2])))
            )
    t["V22"] = v22
    t["V23"] = sum(
        -4.0 * L0**2 * sq[j] * inv[j] * nu4 * ((TGi * ctx.T_G[j]) @ (TGi * GbP)) for j in others
    )
    Rb = np.asarray(model.R_b)
    Gb = np.asarray(model.G_b)
    w = np.linalg.solve(np.eye(model.p) - Rb / a, Pv)
    Rb_w = Rb @ w
    Gb_w = Gb.T @ w
    t["V33"] = 4.0 * L0**2 / a * (trr * (w @ Rb_w) / phi1 + nu4 * np.sum((Gb_w * TGi) ** 2))

    if kind == "correlation_matrix":
        GTG = {j: G @ ctx.T_G[j] for j in others}
        t["V14"] = a * L0 * L0p * hform(TRiP, (GTGi, GTGi), (TGi, TGi))
        t["V15"] = -a * c5 * L0p * hform(TRiTRi, (GTGi, GTGi), (TGi, TGi))
        t["V16"] = sum(
            -2.0 * a**2 * L0 * L0p * inv[j] * hform(TRi * ctx.T_R[j], (GTGi, GTGi), (TGi, TGi))
            for j in others
        )
        t["V24"] = sum(
            2.0 * L0**2 * np.sqrt(a) * sq[j] * inv[j] * hform(TRiP, (GTGi, GTG[j]), (TGi, ctx.T_G[j]))
            for j in others
        )
        t["V25"] = sum(
            -2.0 * L0 * np.sqrt(a) * sq[j] * c5 / psi * inv[j]
            * hform(TRiTRi, (GTGi, GTG[j]), (TGi, ctx.T_G[j]))
            for j in others
        )
        v26 = 0.0
        for j1 in others:
            for j2 in others:
                v26 += (
                    -4.0 * L0**2 * a**1.5 * sq[j1] / psi * inv[j1] * inv[j2]
                    * hform(TRi * ctx.T_R[j2], (GTGi, GTG[j1]), (TGi, ctx.T_G[j1]))
                )
        t["V26"] = v26
        t["V34"] = -2.0 * L0**2 / (psi * np.sqrt(a)) * hform(TRiP, (Rb_w, GTGi), (TGi, Gb_w))
        t["V35"] = 2.0 * L0 * c5 / (psi * np.sqrt(a)) * hform(TRiTRi, (Rb_w, GTGi), (TGi, Gb_w))
        t["V36"] = sum(
            4.0 * L0**2 * np.sqrt(a) / psi * inv[j] * hform(TRi * ctx.T_R[j], (Rb_w, GTGi), (TGi, Gb_w))
            for j in others
        )
        t["V44"] = L0**2 * (TRiP @ Rf @ TRiP)
        t["V45"] = -L0 * c5 * (TRiTRi @ Rf @ TRiP)
        t["V46"] = sum(-2.0 * a * L0**2 * inv[j] * ((TRi * ctx.T_R[j]) @ Rf @ TRiP) for j in others)
        t["V55"] = c5**2 * (TRiTRi @ Rf @ TRiTRi)
        t["V56"] = sum(2.0 * a * L0 * c5 * inv[j] * (TRiTRi @ Rf @ (TRi * ctx.T_R[j])) for j in others)
        v66 = 0.0
        for j1 in others:
            for j2 in others:
                v66 += (
                    4.0 * a**2 * L0**2 * inv[j1] * inv[j2]
                    * ((TRi * ctx.T_R[j2]) @ Rf @ (TRi * ctx.T_R[j1]))
                )
        t["V66"] = v66
        labels = TERM_LABELS
    else:
        labels = COVARIANCE_TERMS
    terms = {label: float(t[label]) for label in labels}
    return EigvecVariance(
        kind=kind, k=k, sigma2=_sum_terms(terms), terms=terms, nu4=float(nu4),
        Rfrak=Rf if kind == "correlation_matrix" else None,
    )


@dataclass
class NormalizationEffect:
    alpha: float
    effective_term: float
    full_delta: float | None
    vv: float
    vrrv: float
    l0: float | None

    @property
    def sign(self) -> str:
        if self.effective_term < 0:
            return "negative"
        if self.effective_term > 0:
            return "positive"
        return "zero"

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "effective_term": self.effective_term,
            "sign": self.sign,
            "full_delta": self.full_delta,
            "VV": self.vv,
            "VRRV": self.vrrv,
            "l0": self.l0,
        }


def normalization_effect(model: PopulationModel, n: int | None = None, nu4: float = 0.0) -> NormalizationEffect:
    """Sign-determining term for the variance change caused by normalization.

    effective_term = -[2 alpha (V1 o V1)^T (V1 o V1) - (V1 o V1)^T (R o R)(V1 o V1)].
    With ``n`` given, ``full_delta`` is the limiting variance of theta_1 for the
    correlation matrix minus that for the covariance matrix, including the
    nu4 terms.
    """
    if model.mode != "correlation":
        raise ScopeError("normalization effect needs a correlation-mode model (unit-diagonal Sigma)")
    if model.K != 1 or model.M != 1:
        raise ScopeError("normalization effect is defined for a single simple leading spike")
    alpha = float(model.spikes.alphas[0])
    V1 = model.V[:, 0]
    U1 = model.U[:, 0]
    v2 = V1 * V1
    R = np.asarray(model.R)
    vv = float(v2 @ v2)
    vrrv = float(v2 @ (R * R) @ v2)
    eff = -(2.0 * alpha * vv - vrrv)
    full = None
    l0 = None
    if n is not None:
        l0 = rmt_point(model, n, 0).l0
        G = np.asarray(model.G)
        GG = G * G
        u2 = U1 * U1
        full = l0**2 * (
            -4.0 * alpha * vv - 2.0 * nu4 * (v2 @ GG @ u2) + v2 @ rfrak(model, nu4) @ v2
        )
        full = float(full)
    return NormalizationEffect(alpha=alpha, effective_term=float(eff), full_delta=full, vv=vv, vrrv=vrrv, l0=l0)
