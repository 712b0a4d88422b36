"""Idle time and lost work for Markov-modulated compound Poisson input.

Every state drains at a strictly negative rate and receives compound Poisson
jobs, so the workload reaches 0 continuously and leaves ``[0, K]`` upward only
by a jump. The joint transform

    E_{x,i}[exp(-a1 V(T) - a2 I(T) - a3 L(T)); J(T) = j]

of the workload, the idle time ``I`` (time spent at 0) and the lost work
``L`` (overflow truncated at ``K``) at the killing epoch ``T`` decomposes as

    chi~(x) = delta_minus(x) chi~(0) + eta~(K - x, a3) chi~(K) + delta_star(x),

where ``eta~(u) = eta(u) - delta_minus(K - u) eta(K)`` is the overshoot
transform of leaving through ``K`` before reaching 0. From 0 the workload
stays put until the first arrival, transition or killing epoch, which gives
the remaining ``d`` equations.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import ModelError, NumericalError
from .expsum import jump_law, tail_transform
from .model_core import to_user_order
from .transient_workload import _check_x, _real_if, get_solver

CONTOUR_NODES = 16


@dataclass
class TriLST:
    """Joint transform of workload, idle time and lost work (user order)."""

    alpha1: complex
    alpha2: complex
    alpha3: complex
    beta: complex
    chi0: np.ndarray
    chiK: np.ndarray
    chi_x: np.ndarray


def _require_cpp(spec):
    for c in spec.components:
        if c.sigma != 0 or not c.drift < 0:
            raise ModelError("loss_idle requires negative-drift MM-CPP")
        if c.jump_rate > 0 and not c.jump_dist.is_rational:
            raise ModelError("loss_idle requires negative-drift MM-CPP")


class LossIdleSolver:
    """Boundary equations for ``chi~`` of an ordered model at one ``beta``."""

    def __init__(self, spec, beta):
        _require_cpp(spec)
        self.spec = spec
        self.beta = complex(beta)
        self.K = spec.capacity
        self.d = spec.d
        self.base = get_solver(spec, self.beta)
        self.cache = self.base.cache
        lam = np.array([c.jump_rate for c in spec.components], dtype=float)
        self.omega = self.beta + spec.q + lam
        Q = spec.Q_array
        # (state, target, rate, jump): arrivals keep the state, transitions move it
        self.events = []
        for i, c in enumerate(spec.components):
            if c.jump_rate > 0:
                self.events.append((i, i, c.jump_rate, c.jump_dist))
            for k in range(self.d):
                if k != i and Q[i, k] > 0:
                    self.events.append((i, k, Q[i, k], spec.transition_jumps[i][k]))
        self.laws = {id(jump): jump_law(jump, self.K) for _, _, _, jump in self.events}

    def eta_tilde_sum(self, alpha):
        """``eta~(K - y, alpha)`` as an exponential sum in ``y``."""
        etaK = self.cache.eta(self.K, alpha)
        return self.cache.eta_sum(alpha) - self.cache.dminus_sum.right(etaK)

    def eta_tilde(self, u, alpha):
        return self.eta_tilde_sum(alpha)(self.K - u)

    def boundary(self, a1, a2, a3):
        """Matrix ``P~`` and right-hand side of ``(I - P~) [chi~(0); chi~(K)] = b~``."""
        d, K = self.d, self.K
        D = self.cache.dminus_sum
        H = self.eta_tilde_sum(a3)
        S = self.base.delta_star_sum(a1)
        P = np.zeros((2 * d, 2 * d), dtype=complex)
        b = np.zeros((2 * d, d), dtype=complex)
        for i in range(d):
            b[i, i] = self.beta / (self.omega[i] + a2)
        for i, k, rate, jump in self.events:
            w = rate / (self.omega[i] + a2)
            law = self.laws[id(jump)]
            P[i, :d] += w * law.expect(D.row(k))[0]
            P[i, d:] += w * law.expect(H.row(k))[0]
            P[i, d + k] += w * tail_transform(jump, K, a3)
            b[i] += w * law.expect(S.row(k))[0]
        P[d:, :d] = D(K)
        P[d:, d:] = H(K)
        b[d:] = S(K)
        return P, b, (D, H, S)

    def _check_dominance(self, P):
        rows = np.sum(np.abs(P), axis=1)
        if np.any(rows >= 1.0):
            k = int(np.argmax(rows))
            raise NumericalError(f"idle/loss system not diagonally dominant in row {k}: {rows[k]:.6g}")

    def chi(self, x, a1, a2, a3):
        d = self.d
        P, b, (D, H, S) = self.boundary(a1, a2, a3)
        real = all(abs(np.imag(v)) == 0 and np.real(v) >= 0 for v in (a1, a2, a3, self.beta))
        if real:
            self._check_dominance(P)
        sol = linalg.solve(np.eye(2 * d) - P, b)
        resid = np.max(np.abs((np.eye(2 * d) - P) @ sol - b))
        if resid > 1e-9 * max(1.0, np.max(np.abs(b))):
            raise NumericalError(f"idle/loss solve residual {resid:.2g}")
        chi0, chiK = sol[:d], sol[d:]
        if x == 0:
            chix = chi0
        elif x == self.K:
            chix = chiK
        else:
            chix = D(x) @ chi0 + H(x) @ chiK + S(x)
        return chi0, chiK, chix

    def contour_radius(self):
        lhp = np.abs(self.cache.lhp) if len(self.cache.lhp) else np.array([np.inf])
        scale = min(np.min(lhp), np.min(np.abs(self.omega)))
        return min(0.5, 0.25 * scale)

    def mean_functional(self, x, which):
        """``E_{x,i}[I(T); J(T) = j]`` (``which=2``) or ``E[L(T); ...]`` (``which=3``).

        Minus the derivative at 0 in the matching argument, by a Cauchy
        integral on a circle that avoids the transform's singularities.
        """
        r = self.contour_radius()
        theta = 2 * np.pi * (np.arange(CONTOUR_NODES) + 0.5) / CONTOUR_NODES
        acc = 0
        for t in theta:
            z = r * np.exp(1j * t)
            args = [0.0, 0.0, 0.0]
            args[which - 1] = z
            acc = acc + self.chi(x, *args)[2] * np.exp(-1j * t)
        return -acc / (CONTOUR_NODES * r)


@lru_cache(maxsize=128)
def get_loss_solver(spec, beta):
    return LossIdleSolver(spec, complex(beta))


def _solver(spec, beta):
    _require_cpp(spec)
    ordered, perm = spec.ordering
    return get_loss_solver(ordered, complex(beta)), perm


def eta_tilde(spec, u, alpha, beta):
    """Overshoot transform of exceeding ``K`` before reaching 0, from level ``K - u``.

    Parameters
    ----------
    spec : ModelSpec
        Negative-drift compound Poisson model.
    u : float
        Distance to the upper level, in ``[0, K]``.
    alpha, beta : complex

    Returns
    -------
    ndarray
        ``d x d`` matrix in the user's state order.
    """
    if not 0 <= u <= spec.capacity:
        raise ValueError(f"u={u} outside [0, {spec.capacity}]")
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.eta_tilde(u, alpha), beta, alpha), perm)


def chi_tilde(spec, x, alpha1, alpha2, alpha3, beta):
    """Joint transform of ``(V(T), I(T), L(T))`` with the background state.

    Returns
    -------
    TriLST
    """
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    mats = solver.chi(x, alpha1, alpha2, alpha3)
    probe = 0.0 if all(np.imag(a) == 0 for a in (alpha1, alpha2, alpha3)) else 1j
    conv = [to_user_order(_real_if(m, beta, probe), perm) for m in mats]
    return TriLST(alpha1, alpha2, alpha3, beta, *conv)


def expected_idle(spec, x, beta):
    """``E_{x,i}[I(T_beta); J(T_beta) = j]``."""
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.mean_functional(x, 2), beta), perm)


def expected_lost(spec, x, beta):
    """``E_{x,i}[L(T_beta); J(T_beta) = j]``."""
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.mean_functional(x, 3), beta), perm)
