"""Observer gain synthesis via the structured LMI.

Feasibility of

    [[Lambda, P E], [E^T P, -gamma^2 I]] < 0,
    Lambda = P(kappa I + A) + (kappa I + A)^T P + I - W C - C^T W^T,

with L = P^{-1} W guarantees both the eigenvalue placement Re(eig(A - LC))
< -kappa and the H-infinity bound ||(jwI - A + LC)^{-1} E|| < gamma.

Because (A, C, E) are identity-block canonical and every reported solution
is a scalar multiple of I in each block, the LMI decouples per joint: it is
decided on a 3x3 matrix in five scalars (p11, p12, p22, w1, w2) and
replicated across joints.  The solver runs a deterministic seeded search
(pole-placement and analytic corner seeds, coordinate descent on the
maximum eigenvalue, then a quality polish that lowers K0*L2 while keeping a
feasibility margin) and certifies the returned point by exact eigenvalue
evaluation of the assembled dense LMI.  Infeasibility is reported as a
result, never an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class SynthesisError(ValueError):
    """Invalid synthesis input (e.g. singular P12)."""


class InfeasibleSynthesis(RuntimeError):
    """Raised by synthesize() when no certified feasible point was found."""


@dataclass
class SynthesisSpec:
    """Design targets for the gain synthesis."""

    n: int = 2
    kappa: float = 10.0   # decay-rate floor, 1/s
    gamma: float = 0.5    # H-infinity bound on d -> e
    rho0: float = 250.0   # reaching gain base, N*m
    delta_s: float = 0.05  # boundary-layer width

    def __post_init__(self):
        if self.n < 1:
            raise SynthesisError("n must be at least 1")
        if self.kappa <= 0 or self.gamma <= 0 or self.rho0 <= 0:
            raise SynthesisError("kappa, gamma and rho0 must be positive")
        if self.delta_s < 0:
            raise SynthesisError("delta_s must be nonnegative")


@dataclass
class LyapunovBlocks:
    """Scalar blocks of P = [[p11 I, p12 I], [p12 I, p22 I]]."""

    p11: float
    p12: float
    p22: float
    n: int = 1

    @property
    def det(self) -> float:
        return self.p11 * self.p22 - self.p12**2

    def dense(self) -> np.ndarray:
        eye = np.eye(self.n)
        return np.block([[self.p11 * eye, self.p12 * eye], [self.p12 * eye, self.p22 * eye]])

    def min_eig(self) -> float:
        tr = 0.5 * (self.p11 + self.p22)
        rad = math.sqrt((0.5 * (self.p11 - self.p22)) ** 2 + self.p12**2)
        return tr - rad


# ---------------------------------------------------------------------------
# closed-form eigenvalues for the small symmetric blocks

def _sym2_min_eig(a, b, c):
    return 0.5 * (a + c) - math.sqrt((0.5 * (a - c)) ** 2 + b * b)


def _sym3_max_eig(a11, a12, a13, a22, a23, a33):
    p1 = a12 * a12 + a13 * a13 + a23 * a23
    if p1 == 0.0:
        return max(a11, a22, a33)
    q = (a11 + a22 + a33) / 3.0
    p2 = (a11 - q) ** 2 + (a22 - q) ** 2 + (a33 - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b11, b22, b33 = (a11 - q) / p, (a22 - q) / p, (a33 - q) / p
    b12, b13, b23 = a12 / p, a13 / p, a23 / p
    detb = (
        b11 * (b22 * b33 - b23 * b23)
        - b12 * (b12 * b33 - b23 * b13)
        + b13 * (b12 * b23 - b22 * b13)
    )
    r = min(1.0, max(-1.0, 0.5 * detb))
    return q + 2.0 * p * math.cos(math.acos(r) / 3.0)


def _lmi3_entries(x, kappa, gamma):
    p11, p12, p22, w1, w2 = x
    l11 = 2.0 * kappa * p11 + 1.0 - 2.0 * w1
    l12 = 2.0 * kappa * p12 + p11 - w2
    l22 = 2.0 * kappa * p22 + 2.0 * p12 + 1.0
    return l11, l12, l22, p12, p22, -gamma * gamma


def _merit(x, kappa, gamma):
    """max(lambda_max(per-joint 3x3 LMI), -lambda_min(P)); negative iff feasible."""
    l11, l12, l22, pe1, pe2, g2 = _lmi3_entries(x, kappa, gamma)
    top = _sym3_max_eig(l11, l12, pe1, l22, pe2, g2)
    pmin = _sym2_min_eig(x[0], x[1], x[2])
    return max(top, -pmin)


def _derived_scalars(x):
    p11, p12, p22, w1, w2 = x
    det = p11 * p22 - p12 * p12
    if det == 0.0:
        return None
    l1 = (p22 * w1 - p12 * w2) / det
    l2 = (-p12 * w1 + p11 * w2) / det
    h = -p22 * p11 / p12 + p12 if p12 != 0.0 else math.inf
    k0 = -p22 / p12 if p12 != 0.0 else math.inf
    return l1, l2, h, k0


# ---------------------------------------------------------------------------
# deterministic seeding

def _lyap2(a_mat, q_mat):
    """Solve P A + A^T P = -Q for symmetric 2x2 P (3x3 linear system)."""
    a11, a12, a21, a22 = a_mat[0, 0], a_mat[0, 1], a_mat[1, 0], a_mat[1, 1]
    sys = np.array(
        [
            [2.0 * a11, 2.0 * a21, 0.0],
            [a12, a11 + a22, a21],
            [0.0, 2.0 * a12, 2.0 * a22],
        ]
    )
    rhs = -np.array([q_mat[0, 0], q_mat[0, 1], q_mat[1, 1]])
    x, y, z = np.linalg.solve(sys, rhs)
    return np.array([[x, y], [y, z]])


def _pole_seeds(kappa, gamma):
    out = []
    for c in (1.5, 2.0, 3.0, 5.0, 8.0):
        for sep in (1.0, 1.5, 3.0):
            a1, a2 = c * kappa, c * kappa * sep
            l1, l2 = a1 + a2, a1 * a2
            a_shift = np.array([[kappa - l1, 1.0], [-l2, kappa]])
            try:
                p = _lyap2(a_shift, 2.0 * np.eye(2))
            except np.linalg.LinAlgError:
                continue
            if _sym2_min_eig(p[0, 0], p[0, 1], p[1, 1]) <= 0:
                continue
            w = p @ np.array([l1, l2])
            out.append([p[0, 0], p[0, 1], p[1, 1], w[0], w[1]])
    return out


def _corner_seeds(kappa, gamma):
    """Seeds near the low-K0*L2 corner of the feasible set.

    Derived from the structure of the per-joint LMI: the (2,2) Schur entry
    forces |p12| >= (1 + 2 kappa p22 + p22^2/gamma^2)/2, which is smallest
    relative to p22 around p22 ~ gamma; w2 is centered to zero the
    off-diagonal of the reduced 2x2 and w1 set just past the R11 < 0 edge.
    """
    out = []
    g2 = gamma * gamma
    for s22 in (0.6, 1.0, 1.6):
        p22 = s22 * gamma
        pmin = 0.5 * (1.0 + 2.0 * kappa * p22 + p22 * p22 / g2)
        for s12 in (1.05, 1.2, 1.5):
            p12 = -s12 * pmin
            r22 = 2.0 * kappa * p22 + 2.0 * p12 + 1.0 + p22 * p22 / g2
            if r22 >= 0.0:
                continue
            for s11 in (1.1, 1.3, 1.8, 2.6):
                p11 = s11 * p12 * p12 / p22
                for a in (2.0, 20.0):
                    w1 = kappa * p11 + 0.5 + 0.5 * p12 * p12 / g2 + a
                    slack = 0.8 * math.sqrt(max(2.0 * a * (-r22), 0.0))
                    for sl in (-1.0, 0.0):
                        w2 = p11 + 2.0 * kappa * p12 + p12 * p22 / g2 + sl * slack
                        out.append([p11, p12, p22, w1, w2])
    return out


def _coordinate_descent(x0, kappa, gamma, iters=60):
    x = list(x0)
    fx = _merit(x, kappa, gamma)
    steps = [0.5 * abs(v) + 1e-3 for v in x]
    for _ in range(iters):
        improved = False
        for i in range(5):
            for sgn in (1.0, -1.0):
                xt = list(x)
                xt[i] = x[i] + sgn * steps[i]
                ft = _merit(xt, kappa, gamma)
                if ft < fx - 1e-15:
                    x, fx = xt, ft
                    improved = True
        if not improved:
            steps = [s * 0.5 for s in steps]
            if max(steps) < 1e-9:
                break
    return x, fx


def _quality(x):
    d = _derived_scalars(x)
    if d is None:
        return math.inf
    l1, l2, h, k0 = d
    if l1 <= 0 or l2 <= 0 or h <= 0 or k0 <= 0:
        return math.inf
    return k0 * l2


def _polish(x0, kappa, gamma, iters=150, margin_frac=0.3):
    """Lower K0*L2 by multiplicative coordinate moves, keeping a margin."""
    x = list(x0)
    m0 = _merit(x, kappa, gamma)
    if m0 >= 0.0:
        return x0
    bar = m0 * margin_frac
    sx = _quality(x)
    rel = [0.4] * 5
    for _ in range(iters):
        improved = False
        for i in range(5):
            for sgn in (1.0, -1.0):
                xt = list(x)
                xt[i] = x[i] * (1.0 + sgn * rel[i]) if abs(x[i]) > 1e-8 else sgn * rel[i]
                if _merit(xt, kappa, gamma) > bar:
                    continue
                st = _quality(xt)
                if st < sx * (1.0 - 1e-10):
                    x, sx = xt, st
                    improved = True
        if not improved:
            rel = [r * 0.5 for r in rel]
            if max(rel) < 1e-7:
                break
    return x


@dataclass
class FeasibilityReport:
    """Exact eigenvalue check of the assembled dense LMI."""

    feasible: bool
    max_eig_lmi: float
    min_eig_p: float
    kappa: float
    gamma: float


def check_lmi_feasible(blocks: LyapunovBlocks, w1: float, w2: float,
                       kappa: float, gamma: float) -> FeasibilityReport:
    """Assemble [[Lambda, PE], [E^T P, -gamma^2 I]] densely and eigen-check it."""
    n = blocks.n
    eye = np.eye(n)
    zero = np.zeros((n, n))
    a = np.block([[zero, eye], [zero, zero]])
    c = np.hstack([eye, zero])
    e = np.vstack([zero, eye])
    p = blocks.dense()
    w = np.vstack([w1 * eye, w2 * eye])
    ka = kappa * np.eye(2 * n) + a
    lam = p @ ka + ka.T @ p + np.eye(2 * n) - w @ c - c.T @ w.T
    pe = p @ e
    m_full = np.block([[lam, pe], [pe.T, -gamma**2 * np.eye(n)]])
    max_eig = float(np.linalg.eigvalsh(m_full)[-1])
    min_eig_p = float(np.linalg.eigvalsh(p)[0])
    return FeasibilityReport(
        feasible=bool(max_eig < 0.0 and min_eig_p > 0.0),
        max_eig_lmi=max_eig,
        min_eig_p=min_eig_p,
        kappa=kappa,
        gamma=gamma,
    )


@dataclass
class SynthesisResult:
    """Outcome of solve_lmi; feasible=False carries the best-found merit."""

    feasible: bool
    kappa: float
    gamma: float
    best_merit: float
    blocks: LyapunovBlocks | None = None
    w1: float = 0.0
    w2: float = 0.0
    l1: float = 0.0
    l2: float = 0.0


def solve_lmi(spec: SynthesisSpec, polish: bool = True) -> SynthesisResult:
    """Search the five scalar unknowns of the per-joint LMI.

    Deterministic: fixed seed lists, stable candidate ordering, first-wins
    tie break on the quality score. The returned point is re-certified with
    a dense eigenvalue evaluation before being declared feasible.
    """
    kappa, gamma = spec.kappa, spec.gamma
    seeds = _pole_seeds(kappa, gamma) + _corner_seeds(kappa, gamma)
    ranked = sorted(range(len(seeds)), key=lambda i: _merit(seeds[i], kappa, gamma))

    candidates = []
    best_merit = math.inf
    for idx in ranked[:20]:
        x, fx = _coordinate_descent(seeds[idx], kappa, gamma)
        best_merit = min(best_merit, fx)
        if fx < 0.0:
            xp = _polish(x, kappa, gamma) if polish else x
            # keep only points that survive the dense certification
            blk = LyapunovBlocks(xp[0], xp[1], xp[2], n=1)
            rep = check_lmi_feasible(blk, xp[3], xp[4], kappa, gamma)
            if rep.feasible:
                candidates.append(xp)

    if not candidates:
        return SynthesisResult(feasible=False, kappa=kappa, gamma=gamma, best_merit=best_merit)

    best = min(candidates, key=_quality)
    l1, l2, _, _ = _derived_scalars(best)
    blocks = LyapunovBlocks(best[0], best[1], best[2], n=spec.n)
    return SynthesisResult(
        feasible=True,
        kappa=kappa,
        gamma=gamma,
        best_merit=_merit(best, kappa, gamma),
        blocks=blocks,
        w1=best[3],
        w2=best[4],
        l1=l1,
        l2=l2,
    )


@dataclass
class ObserverGains:
    """Full synthesized parameter set, scalar-per-joint blocks.

    All gain matrices are scalar multiples of the identity; the scalars are
    stored and dense matrices exposed as properties for the small n used
    here.
    """

    spec: SynthesisSpec
    blocks: LyapunovBlocks
    l1: float
    l2: float
    h: float
    k0: float
    p_k: float
    q_zeta: float
    q_xi: float
    q_d: float
    w1: float = field(default=0.0)
    w2: float = field(default=0.0)

    @property
    def n(self) -> int:
        return self.spec.n

    def eye(self) -> np.ndarray:
        return np.eye(self.n)

    @property
    def L1(self):
        return self.l1 * self.eye()

    @property
    def L2(self):
        return self.l2 * self.eye()

    @property
    def H(self):
        return self.h * self.eye()

    @property
    def K0(self):
        return self.k0 * self.eye()

    @property
    def K(self):
        return np.vstack([self.K0, self.eye()])

    @property
    def P_K(self):
        return self.p_k * self.eye()

    @property
    def p_k_min_eig(self) -> float:
        return self.p_k

    @property
    def Q_zeta(self):
        return self.q_zeta * self.eye()

    @property
    def Q_xi(self):
        return self.q_xi * self.eye()

    @property
    def Q_d(self):
        return self.q_d * self.eye()


def derive_smo_gains(blocks: LyapunovBlocks, l1: float, l2: float,
                     spec: SynthesisSpec, w1: float = 0.0, w2: float = 0.0) -> ObserverGains:
    """Build H, K0, P_K and the rho-gain weights from the Lyapunov blocks.

    H = -P22 P12^{-1} P11 + P12^T, K0 = -(P12^{-1})^T P22, K = [K0; I],
    P_K = K^T P K (computed both by the factored identity and directly),
    and Q_* from the partitions of A_L. Validates K^T P = [H, 0].
    """
    p11, p12, p22 = blocks.p11, blocks.p12, blocks.p22
    if p12 == 0.0 or not math.isfinite(p12):
        raise SynthesisError("P12 must be nonsingular (Corollary 1)")
    h = -p22 * p11 / p12 + p12
    k0 = -p22 / p12
    # K^T P = [k0*p11 + p12, k0*p12 + p22]; second entry must vanish
    ktp_1 = k0 * p11 + p12
    ktp_2 = k0 * p12 + p22
    scale = max(abs(p11), abs(p22), abs(p12), 1.0)
    if abs(ktp_1 - h) > 1e-9 * scale or abs(ktp_2) > 1e-9 * scale:
        raise SynthesisError("K^T P != [H, 0]; inconsistent blocks")
    # two routes to P_K = K^T P K
    p_k_direct = ktp_1 * k0 + ktp_2
    p_k_factored = p22 * (p11 * p22 - p12 * p12) / (p12 * p12)
    if abs(p_k_direct - p_k_factored) > 1e-9 * max(abs(p_k_direct), 1.0):
        raise SynthesisError("P_K factorization mismatch")
    if p_k_direct <= 0.0:
        raise SynthesisError("P_K must be positive definite (Theorem 2a)")
    # A_L = [A_L^L, A_L^R] with A_L^L = [-L1; -L2], A_L^R = [I; 0]
    q_zeta = (ktp_1 * (-l1) + ktp_2 * (-l2)) / p_k_direct
    q_xi = ktp_1 / p_k_direct
    q_d = ktp_2 / p_k_direct  # = K^T P E / P_K, structurally zero
    return ObserverGains(
        spec=spec,
        blocks=LyapunovBlocks(p11, p12, p22, n=spec.n),
        l1=l1,
        l2=l2,
        h=h,
        k0=k0,
        p_k=p_k_direct,
        q_zeta=q_zeta,
        q_xi=q_xi,
        q_d=q_d,
        w1=w1,
        w2=w2,
    )


def verify_eigenvalues(l1: float, l2: float, kappa: float):
    """Eigenvalues of the per-joint A_L block [[-l1, 1], [-l2, 0]].

    Roots of lambda^2 + l1 lambda + l2, computed in closed form; passes iff
    both real parts are strictly left of -kappa.
    """
    disc = l1 * l1 - 4.0 * l2
    if disc >= 0.0:
        r = math.sqrt(disc)
        eigs = np.array([(-l1 + r) / 2.0, (-l1 - r) / 2.0], dtype=complex)
    else:
        r = math.sqrt(-disc)
        eigs = np.array([complex(-l1 / 2.0, r / 2.0), complex(-l1 / 2.0, -r / 2.0)])
    ok = bool(np.all(eigs.real < -kappa))
    return eigs, ok


def default_omega_grid(n_points: int = 200) -> np.ndarray:
    return np.logspace(-2, 4, n_points)


def verify_hinf(l1: float, l2: float, gamma: float, omegas: np.ndarray | None = None):
    """Sup over the frequency grid of sigma_max((jw I - A_L)^{-1} E).

    Per-joint closed form: the transfer column is [1; jw + l1] / (-w^2 +
    jw l1 + l2), so the gain is sqrt(1 + |jw + l1|^2) / |den|.
    """
    if omegas is None:
        omegas = default_omega_grid()
    w = np.asarray(omegas, dtype=float)
    den = np.abs(-(w**2) + 1j * w * l1 + l2)
    num = np.sqrt(1.0 + w**2 + l1**2)
    gains = num / den
    sup = float(np.max(gains))
    return sup, bool(sup < gamma)


def schur_checks(blocks: LyapunovBlocks) -> dict[str, dict]:
    """Diagnostic report of the positive-definiteness chain on P.

    Checks P11 > 0, P22 > 0, the Schur complement P22 - P12^T P11^{-1} P12
    > 0, P12 Hurwitz, and the strengthened -P12 - P12^T - I > 0.
    """
    p11, p12, p22 = blocks.p11, blocks.p12, blocks.p22
    schur = p22 - p12 * p12 / p11 if p11 != 0.0 else -math.inf
    strengthened = -2.0 * p12 - 1.0
    report = {
        "p11_pd": {"value": p11, "ok": p11 > 0.0},
        "p22_pd": {"value": p22, "ok": p22 > 0.0},
        "schur_complement_pd": {"value": schur, "ok": schur > 0.0},
        "p12_hurwitz": {"value": p12, "ok": p12 < 0.0},
        "strengthened_p12": {"value": strengthened, "ok": strengthened > 0.0},
    }
    report["all_ok"] = all(v["ok"] for v in report.values())
    return report


def synthesize(spec: SynthesisSpec, polish: bool = True) -> ObserverGains:
    """solve_lmi + derive_smo_gains; raises InfeasibleSynthesis on failure."""
    res = solve_lmi(spec, polish=polish)
    if not res.feasible:
        raise InfeasibleSynthesis(
            f"LMI infeasible for kappa={spec.kappa}, gamma={spec.gamma} "
            f"(best merit {res.best_merit:.3e})"
        )
    return derive_smo_gains(res.blocks, res.l1, res.l2, spec, w1=res.w1, w2=res.w2)


# ---------------------------------------------------------------------------
# gain file io (plain key = value text, consumed by the observer and harness)

GAIN_FILE_FIELDS = (
    "n", "kappa", "gamma", "rho0", "delta_s",
    "p11", "p12", "p22", "w1", "w2",
    "l1", "l2", "h", "k0", "p_k", "q_zeta", "q_xi", "q_d",
)


def save_gains(gains: ObserverGains, path) -> None:
    values = {
        "n": gains.n,
        "kappa": gains.spec.kappa,
        "gamma": gains.spec.gamma,
        "rho0": gains.spec.rho0,
        "delta_s": gains.spec.delta_s,
        "p11": gains.blocks.p11,
        "p12": gains.blocks.p12,
        "p22": gains.blocks.p22,
        "w1": gains.w1,
        "w2": gains.w2,
        "l1": gains.l1,
        "l2": gains.l2,
        "h": gains.h,
        "k0": gains.k0,
        "p_k": gains.p_k,
        "q_zeta": gains.q_zeta,
        "q_xi": gains.q_xi,
        "q_d": gains.q_d,
    }
    with open(path, "w") as fh:
        for key in GAIN_FILE_FIELDS:
            fh.write(f"{key} = {values[key]!r}\n")


def load_gains(path) -> ObserverGains:
    raw: dict[str, float] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            raw[key.strip()] = float(val.strip())
    missing = set(GAIN_FILE_FIELDS) - set(raw)
    if missing:
        raise SynthesisError(f"gain file missing fields: {sorted(missing)}")
    spec = SynthesisSpec(
        n=int(raw["n"]), kappa=raw["kappa"], gamma=raw["gamma"],
        rho0=raw["rho0"], delta_s=raw["delta_s"],
    )
    blocks = LyapunovBlocks(raw["p11"], raw["p12"], raw["p22"], n=spec.n)
    gains = derive_smo_gains(blocks, raw["l1"], raw["l2"], spec, w1=raw["w1"], w2=raw["w2"])
    for key in ("h", "k0", "p_k"):
        if abs(getattr(gains, key) - raw[key]) > 1e-6 * max(1.0, abs(raw[key])):
            raise SynthesisError(f"gain file field {key} inconsistent with P blocks")
    return gains
