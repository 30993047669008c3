"""Sliding-mode state-disturbance observer and the momentum-residual baseline.

The observer runs on the linearized model only: it consumes the measured
zeta, the auxiliary input u and the synthesized gains. It never evaluates
an inertia-matrix inverse and never sees the differentiated velocity in its
feedback path.

State recursion (explicit Euler at the control rate):

    e_zeta = zeta_meas - zeta_hat,  s = H e_zeta
    v = -rho s / (||s|| + delta_s)
    zeta_hat' = zeta_hat + dt (xi_hat + u_upper + L1 e_zeta - K0 v)
    xi_hat'   = xi_hat   + dt (u_lower + L2 e_zeta - v)
    v_eq'     = v_eq + dt w_f (v - v_eq)
    d_hat     = -v_eq'

With this sign convention the error dynamics are e_zeta_dot = -L1 e_zeta +
e_xi + K0 v and e_xi_dot = -L2 e_zeta + v + d, so on the sliding surface
the equivalent control obeys v_eq_dot = -K0^{-1}(v_eq + d): v_eq converges
to -d and d_hat = -v_eq recovers the disturbance through a first-order
filter with pole -1/K0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Bounds
from .linearization import AuxiliaryInput, UncertaintyBudget
from .synthesis import ObserverGains


class ObserverDivergence(RuntimeError):
    """Observer state became non-finite.

    Attributes:
        step: index of the offending step when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass
class ObserverState:
    """Observer internal state; zero-initialized regardless of the plant."""

    zeta_hat: np.ndarray
    xi_hat: np.ndarray
    v_eq: np.ndarray
    d_hat: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "ObserverState":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))


@dataclass
class SlidingDiagnostics:
    s: np.ndarray
    s_norm: float
    rho: float
    in_boundary_layer: bool
    v: np.ndarray = field(default=None)


def rho_gain(e_zeta, xi_hat, gains: ObserverGains, mode: str = "practical",
             budget: UncertaintyBudget | None = None,
             bounds: Bounds | None = None) -> float:
    """Switching-gain magnitude.

    practical: rho0 + ||Q_zeta e_zeta|| + ||Q_xi xi_hat||
    full:      adds the constant terms sigma_M alpha1 ||Q_xi||_2 and
               (alpha_tau + eps_eta) ||Q_d||_2 (requires bounds and budget).
    """
    if gains.spec.rho0 <= 0:
        raise ValueError("rho0 must be positive")
    rho = (
        gains.spec.rho0
        + abs(gains.q_zeta) * float(np.linalg.norm(e_zeta))
        + abs(gains.q_xi) * float(np.linalg.norm(xi_hat))
    )
    if mode == "practical":
        return rho
    if mode != "full":
        raise ValueError(f"unknown rho mode {mode!r}")
    if bounds is None or budget is None:
        raise ValueError("full mode requires bounds and budget")
    rho += bounds.sigma_m * bounds.alpha1 * abs(gains.q_xi)
    rho += (bounds.alpha_tau + budget.eps_eta) * abs(gains.q_d)
    return rho


def switching_term(s, rho: float, delta_s: float) -> np.ndarray:
    """Unit-vector switching law v = -rho s / (||s|| + delta_s).

    With delta_s = 0 this is the exact sign-function law (||v|| = rho for
    s != 0); s = 0 maps to v = 0, the zero selection of the Filippov set.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if delta_s < 0:
        raise ValueError("delta_s must be nonnegative")
    s = np.asarray(s, float)
    ns = float(np.linalg.norm(s))
    if ns + delta_s == 0.0:
        return np.zeros_like(s)
    return -rho * s / (ns + delta_s)


def smo_step(gains: ObserverGains, obs: ObserverState, zeta_meas, u: AuxiliaryInput,
             dt: float, omega_f: float = 100.0, rho_mode: str = "practical",
             budget: UncertaintyBudget | None = None, bounds: Bounds | None = None,
             delta_s: float | None = None, step: int | None = None):
    """One explicit-Euler observer update; returns (state, d_hat, diagnostics)."""
    if delta_s is None:
        delta_s = gains.spec.delta_s
    zeta_meas = np.asarray(zeta_meas, float)
    e_zeta = zeta_meas - obs.zeta_hat
    s = gains.h * e_zeta
    s_norm = float(np.linalg.norm(s))
    rho = rho_gain(e_zeta, obs.xi_hat, gains, rho_mode, budget, bounds)
    v = switching_term(s, rho, delta_s)
    zeta_hat = obs.zeta_hat + dt * (obs.xi_hat + u.upper + gains.l1 * e_zeta - gains.k0 * v)
    xi_hat = obs.xi_hat + dt * (u.lower + gains.l2 * e_zeta - v)
    v_eq = obs.v_eq + dt * omega_f * (v - obs.v_eq)
    d_hat = -v_eq
    state = ObserverState(zeta_hat=zeta_hat, xi_hat=xi_hat, v_eq=v_eq, d_hat=d_hat)
    if not (np.all(np.isfinite(zeta_hat)) and np.all(np.isfinite(xi_hat)) and np.all(np.isfinite(v_eq))):
        raise ObserverDivergence("observer state non-finite", step=step)
    diag = SlidingDiagnostics(
        s=s, s_norm=s_norm, rho=rho,
        in_boundary_layer=bool(s_norm <= delta_s) if delta_s > 0 else bool(s_norm == 0.0),
        v=v,
    )
    return state, d_hat, diag


def reaching_time_bound(s0, rho0: float, p_k) -> float:
    """Theorem-2(b) bound ||s0|| / (rho0 * lambda_min(P_K)) on the reach time."""
    if rho0 <= 0:
        raise ValueError("rho0 must be positive")
    p_k = np.atleast_2d(np.asarray(p_k, float))
    lam_min = float(np.linalg.eigvalsh(p_k)[0])
    if lam_min <= 0:
        raise ValueError("P_K must be positive definite")
    return float(np.linalg.norm(s0)) / (rho0 * lam_min)


def lyapunov_value(s, p_k_scalar: float) -> float:
    """V = s^T P_K^{-1} s / 2 for the scalar-block P_K."""
    s = np.asarray(s, float)
    return 0.5 * float(s @ s) / p_k_scalar


# ---------------------------------------------------------------------------
# generalized-momentum residual baseline (uses velocity feedback on purpose)

@dataclass
class MomentumObserverState:
    p_hat: np.ndarray
    r: np.ndarray


def momentum_observer_step(model_hat, q, qbar_dot, u_lower, state: MomentumObserverState,
                           k_i, dt: float) -> MomentumObserverState:
    """Classical momentum-residual update with error dynamics r_dot = K_I (d - r).

    The measured momentum M_hat(q) qbar_dot closes the loop through the
    differentiated velocity, which is exactly the noise-amplification path
    this package's observer avoids.
    """
    k_i = np.atleast_1d(np.asarray(k_i, float))
    if np.any(k_i <= 0):
        raise ValueError("K_I must be positive definite diagonal")
    xi_meas = model_hat.mass_matrix(np.asarray(q, float)) @ np.asarray(qbar_dot, float)
    p_hat = state.p_hat + dt * (np.asarray(u_lower, float) + state.r)
    r = k_i * (xi_meas - p_hat)
    return MomentumObserverState(p_hat=p_hat, r=r)


class MomentumObserver:
    """Stateful wrapper around momentum_observer_step."""

    def __init__(self, model_hat, k_i, n: int):
        self.model_hat = model_hat
        self.k_i = np.broadcast_to(np.asarray(k_i, float), (n,)).copy()
        self.state = MomentumObserverState(p_hat=np.zeros(n), r=np.zeros(n))

    def step(self, q, qbar_dot, u_lower, dt: float) -> np.ndarray:
        self.state = momentum_observer_step(
            self.model_hat, q, qbar_dot, u_lower, self.state, self.k_i, dt
        )
        return self.state.r
