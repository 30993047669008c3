"""Exact linearization of the sampled plant into unknown-input form.

With zeta = M_hat(q) q and xi = M_hat(q) qd (the general momentum), the
plant becomes

    xdot = A x + u + E d,     zeta = C x,

with x = [zeta; xi], A = [[0, I], [0, 0]], C = [I, 0], E = [0; I].  The
auxiliary input u collects everything the identified model can compute from
position measurements and the differentiated velocity; d lumps the external
torque with the model-error term eta.  None of this requires inverting M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Bounds, IdentifiedModel


def compute_zeta(m_hat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Position-only measurable state component zeta = M_hat(q) q."""
    return np.asarray(m_hat) @ np.asarray(q, float)


def lift_state(m_hat: np.ndarray, q: np.ndarray, qd: np.ndarray):
    """Return (zeta, xi) for a plant state under the identified inertia."""
    m_hat = np.asarray(m_hat)
    return m_hat @ np.asarray(q, float), m_hat @ np.asarray(qd, float)


def compute_mdot(m_k: np.ndarray, m_prev: np.ndarray, dt: float) -> np.ndarray:
    """Backward-difference time derivative of the identified inertia matrix."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return (np.asarray(m_k) - np.asarray(m_prev)) / dt


@dataclass
class AuxiliaryInput:
    """The known input u of the linearized model, stored by block.

    upper = Mdot q ; lower = tau + Mdot qbar_dot - N_hat - G_hat - F_hat.
    The differentiated velocity enters only here (feedforward); the observer
    feedback path never sees it.
    """

    upper: np.ndarray
    lower: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.upper, self.lower])


def compute_u(model_hat: IdentifiedModel, q, qbar_dot, tau, mdot) -> AuxiliaryInput:
    q = np.asarray(q, float)
    qbar_dot = np.asarray(qbar_dot, float)
    tau = np.asarray(tau, float)
    mdot = np.asarray(mdot, float)
    upper = mdot @ q
    lower = (
        tau
        + mdot @ qbar_dot
        - model_hat.coriolis(q, qbar_dot)
        - model_hat.gravity(q)
        - model_hat.friction(qbar_dot)
    )
    out = AuxiliaryInput(upper=upper, lower=lower)
    if not (np.all(np.isfinite(upper)) and np.all(np.isfinite(lower))):
        raise ValueError("auxiliary input is non-finite")
    return out


def canonical_matrices(n: int):
    """Dense (A, C, E) of the linearized model, for checks and tests.

    Hot paths never materialize these; the observer exploits the block
    structure directly.
    """
    zero = np.zeros((n, n))
    eye = np.eye(n)
    a = np.block([[zero, eye], [zero, zero]])
    c = np.hstack([eye, zero])
    e = np.vstack([zero, eye])
    return a, c, e


def lemma1_rank_check(n: int) -> dict[str, int]:
    """Ranks of the observability and controllability pairs (both 2n)."""
    a, c, e = canonical_matrices(n)
    obs = np.vstack([c, c @ a])
    ctr = np.hstack([e, a @ e])
    return {
        "rank_obs": int(np.linalg.matrix_rank(obs)),
        "rank_ctr": int(np.linalg.matrix_rank(ctr)),
        "full": 2 * n,
    }


def output_disturbance_coupling(n: int) -> np.ndarray:
    """C @ E, identically zero: the disturbance is unmatched at the output."""
    _, c, e = canonical_matrices(n)
    return c @ e


def estimate_sup_dm(model_hat, n_samples: int = 200, fd_step: float = 1e-5) -> float:
    """Sampled bound on the configuration sensitivity of the identified inertia.

    Finite-differences M_hat along each joint over the workspace and returns
    sup_q sqrt(sum_k ||dM/dq_k||_2^2), an upper bound for the operator norm
    of the contraction (dM/dq) v over unit v. Deterministic sampling.
    """
    rng = np.random.default_rng(2)
    n = model_hat.n
    w = getattr(model_hat, "workspace_halfwidth", None)
    if w is None:
        w = model_hat.base.workspace_halfwidth if hasattr(model_hat, "base") else np.pi
    sup = 0.0
    for _ in range(n_samples):
        q = rng.uniform(-w, w, n)
        total = 0.0
        m0 = model_hat.mass_matrix(q)
        for k in range(n):
            qk = q.copy()
            qk[k] += fd_step
            dk = (model_hat.mass_matrix(qk) - m0) / fd_step
            total += np.linalg.norm(dk, 2) ** 2
        sup = max(sup, np.sqrt(total))
    return 1.05 * sup


@dataclass
class UncertaintyBudget:
    """Lumped model-error bound eps_eta and the resulting disturbance bound."""

    eps_eta: float
    d_bound: float
    terms: dict[str, float]


def uncertainty_budget(bounds: Bounds, sup_dm: float) -> UncertaintyBudget:
    """Evaluate eps_eta = eps_qdot a1 sup||dM/dq|| + eps_m a2 + eps_n + eps_g + eps_f."""
    if sup_dm < 0:
        raise ValueError("sup_dm must be nonnegative")
    terms = {
        "velocity": bounds.eps_qdot * bounds.alpha1 * sup_dm,
        "inertia": bounds.eps_m * bounds.alpha2,
        "coriolis": bounds.eps_n,
        "gravity": bounds.eps_g,
        "friction": bounds.eps_f,
    }
    eps_eta = float(sum(terms.values()))
    return UncertaintyBudget(eps_eta=eps_eta, d_bound=bounds.alpha_tau + eps_eta, terms=terms)
