"""Fluctuation identities for a single spectrally positive Levy process.

All results are for a process killed at an independent exponential time of
rate ``beta``. For a process that is not a subordinator, the scale function
``W`` is the inverse Laplace transform of ``1 / (phi(a) - beta)``. When the
jump law is rational this transform is a proper rational function, so ``W``
is a finite sum of exponentials whose exponents are the roots of
``phi(a) = beta``. Exactly one of them (``psi(beta)``) has positive real part.

For a subordinator the law of ``Y(T)`` is obtained from the partial fractions
of ``beta / (beta - phi(a))``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ModelError, NumericalError
from .expsum import ExpSum, Law, phi1
from .polyroots import MultipleRootError, check_simple, partial_fractions, polished_roots

PERTURB = 1e-6


def _rational_exponent(component):
    poles = component.poles()
    den = np.ones(1)
    for rate, m in poles.items():
        for _ in range(m):
            den = npoly.polymul(den, [rate, 1.0])
    return component.exponent_numerator(poles), den


def _with_perturbation(func, beta, diagnostics):
    try:
        return func(beta), beta
    except MultipleRootError as exc:
        shifted = beta + PERTURB * (1 + abs(beta))
        diagnostics.append(f"{exc}; beta perturbed to {shifted}")
        return func(shifted), shifted


@dataclass
class ScaleFunctionRep:
    """Residue representation ``W(y) = sum_k c_k exp(theta_k y)`` for ``y >= 0``.

    ``theta[0]`` is the root with the largest real part (``psi(beta)``).
    """

    theta: np.ndarray
    c: np.ndarray
    beta: complex
    diagnostics: list = field(default_factory=list)

    @property
    def psi(self):
        return self.theta[0]

    def W(self, y):
        y = np.asarray(y, dtype=float)
        val = np.exp(np.multiply.outer(y, self.theta)) @ self.c
        return np.where(y < 0, 0.0, val)

    def W_scaled(self, y):
        """``(m, e)`` with ``W(y) = m * exp(e)``; safe for large ``y``."""
        y = np.asarray(y, dtype=float)
        e = np.real(self.theta[0]) * y
        m = np.exp(np.multiply.outer(y, self.theta) - e[..., None]) @ self.c
        return np.where(y < 0, 0.0, m), e

    def W_prime(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(np.multiply.outer(y, self.theta)) @ (self.c * self.theta)

    def W0(self):
        """``W(0)``; zero for processes of unbounded variation."""
        return complex(np.sum(self.c))

    def int_W(self, u, alpha=0.0):
        """``int_0^u exp(-alpha y) W(y) dy``."""
        u = np.asarray(u, dtype=float)
        z = np.multiply.outer(u, self.theta - alpha)
        return (u[..., None] * phi1(z)) @ self.c

    def Z(self, u):
        """Secondary scale function ``1 + beta int_0^u W``."""
        return 1.0 + self.beta * self.int_W(u)

    def laplace(self, alpha):
        """``int_0^inf exp(-alpha y) W(y) dy`` for ``Re alpha > Re psi``."""
        return complex(np.sum(self.c / (alpha - self.theta)))

    def rest(self):
        return self.theta[1:], self.c[1:]


def scale_functions(component, beta):
    """Scale function of a non-subordinator component.

    Parameters
    ----------
    component : LevyComponent
    beta : complex
        Killing rate, ``Re beta > 0``.

    Returns
    -------
    ScaleFunctionRep

    Raises
    ------
    ModelError
        For subordinators.
    NumericalError
        "multiple root" when ``phi(a) = beta`` has a repeated root even after
        a small perturbation of ``beta``.
    """
    if component.is_subordinator:
        raise ModelError("psi undefined: the scale function needs a non-subordinator")
    num, den = _rational_exponent(component)
    diagnostics = []

    def solve(b):
        char = npoly.polysub(num, b * den)
        theta = polished_roots(char)
        check_simple(theta)
        c = npoly.polyval(theta, den) / npoly.polyval(theta, npoly.polyder(char))
        return theta, c

    (theta, c), used = _with_perturbation(solve, complex(beta), diagnostics)
    order = np.argsort(-np.real(theta))
    theta, c = theta[order], c[order]
    n_pos = int(np.sum(np.real(theta) > 0))
    if np.real(beta) > 0 and n_pos != 1:
        raise NumericalError(f"expected one root with positive real part, found {n_pos}")
    return ScaleFunctionRep(theta, c, used, diagnostics)


def right_inverse_psi(component, beta):
    """Largest real ``a`` with ``phi(a) = beta`` (the unique right-half root).

    Examples
    --------
    >>> from mapq.model_core import LevyComponent
    >>> round(float(right_inverse_psi(LevyComponent(-1.0, 1.0), 1.0)), 7)
    0.7320508
    """
    rep = scale_functions(component, beta)
    psi = rep.psi
    if np.isreal(beta) and abs(np.imag(psi)) < 1e-10 * (1 + abs(psi)):
        return float(np.real(psi))
    return psi


@dataclass
class FreeLaw:
    """Law of ``Y(T)`` for a subordinator: an atom at 0 plus ``sum c e^{rho y}``."""

    atom0: complex
    rho: np.ndarray
    c: np.ndarray

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(np.multiply.outer(y, self.rho)) @ self.c

    def tail(self, y):
        """``P(Y(T) > y)`` for ``y >= 0``."""
        y = np.asarray(y, dtype=float)
        return np.exp(np.multiply.outer(y, self.rho)) @ (-self.c / self.rho)


def free_law(component, beta):
    """Law of ``Y(T_beta)`` for a subordinator via partial fractions.

    The atom at 0 equals ``beta / (beta + lambda)`` for a zero-drift compound
    Poisson process and vanishes when the drift is positive.
    """
    if not component.is_subordinator:
        raise ModelError("free_law needs a subordinator")
    num, den = _rational_exponent(component)
    diagnostics = []

    def solve(b):
        return partial_fractions(b * den, npoly.polysub(b * den, num))

    (rho, c, direct), _ = _with_perturbation(solve, complex(beta), diagnostics)
    return FreeLaw(direct, rho, c)


@dataclass
class ScalarExitProbs:
    delta_minus: complex
    delta_plus: complex


def _p_plus(rep, u):
    """``P(tau(u) < T)`` written without the growing exponential."""
    theta, c = rep.rest()
    u = np.asarray(u, dtype=float)
    coef = rep.beta * c * (1.0 / theta - 1.0 / rep.psi)
    return np.exp(np.multiply.outer(u, theta)) @ coef


def exit_probs_scalar(component, u_minus, u_plus, beta):
    """Two-sided exit probabilities with killing.

    ``delta_minus`` is the probability of dropping below ``-u_minus`` first,
    ``delta_plus`` that of exceeding ``u_plus`` first (both before killing).
    """
    if component.is_subordinator:
        law = free_law(component, beta)
        return ScalarExitProbs(0j, complex(law.tail(u_plus)))
    rep = scale_functions(component, beta)
    total = u_minus + u_plus
    m1, e1 = rep.W_scaled(u_plus)
    m2, e2 = rep.W_scaled(total)
    dm = complex(m1 / m2 * np.exp(e1 - e2))
    dp = complex(_p_plus(rep, u_plus) - dm * _p_plus(rep, total))
    return ScalarExitProbs(dm, dp)


def _nonsub_law(rep, x, K):
    """Stable law of the reflected process at ``T`` started from ``x``."""
    beta = rep.beta
    t0, c0 = rep.psi, rep.c[0]
    tr, cr = rep.rest()

    def zrest(u):
        return 1.0 - beta * c0 / t0 + beta * np.sum(cr * u * phi1(tr * u))

    w_hat = c0 + np.sum(cr * np.exp((tr - t0) * K))
    zr = zrest(K - x)
    A = (beta * c0 * np.exp(-t0 * x) / t0 + np.exp(-t0 * K) * zr) / w_hat
    atom0 = A * rep.W0()
    pieces = []
    if x > 0:
        lead = c0 * t0 * (beta * c0 / t0 + np.exp(-t0 * (K - x)) * zr) / w_hat
        dens = ExpSum(np.concatenate([[t0], tr]), np.concatenate([[x], np.zeros(len(tr))]),
                      np.concatenate([[lead], A * cr * tr]))
        pieces.append((0.0, x, dens))
    if x < K:
        lead = c0 * (t0 * zr - beta * np.exp(-t0 * x) * np.sum(cr * np.exp(tr * K))) / w_hat
        rates = np.concatenate([[t0], tr, tr])
        anchors = np.concatenate([[K], np.zeros(len(tr)), np.full(len(tr), x)])
        coefs = np.concatenate([[lead], A * cr * tr, -beta * cr])
        pieces.append((x, K, ExpSum(rates, anchors, coefs)))
    return Law(atoms=[(0.0, atom0)], pieces=pieces)


def _sub_law(law, x, K):
    atoms = []
    if x >= K:
        return Law(atoms=[(K, 1.0)])
    if law.atom0 != 0:
        atoms.append((x, law.atom0))
    atoms.append((K, complex(law.tail(K - x))))
    pieces = []
    if len(law.rho):
        pieces.append((x, K, ExpSum(law.rho, np.full(len(law.rho), x), law.c)))
    return Law(atoms=atoms, pieces=pieces)


def reflected_law(component, x, K, beta):
    """Law of the workload at ``T_beta`` for one Levy component on ``[0, K]``.

    Parameters
    ----------
    component : LevyComponent
    x : float
        Initial workload in ``[0, K]``.
    K : float
        Capacity.
    beta : complex
        Killing rate.

    Returns
    -------
    Law
        Atoms (at 0, at ``K`` and, for a flat subordinator, at ``x``) and the
        density pieces in closed form.
    """
    if not 0 <= x <= K:
        raise ValueError("initial workload outside [0, K]")
    if component.is_subordinator:
        return _sub_law(free_law(component, beta), x, K)
    return _nonsub_law(scale_functions(component, beta), x, K)


def reflected_dist(component, x, K, beta):
    """Atoms and density of the reflected workload at ``T_beta``.

    Returns
    -------
    dict
        ``atom0``, ``atomK`` (complex), ``density`` (callable on ``(0, K)``)
        and ``law`` (the underlying :class:`Law`).
    """
    law = reflected_law(component, x, K, beta)

    def density(y):
        y = np.asarray(y, dtype=float)
        if np.any((y <= 0) | (y >= K)):
            raise ValueError("density evaluated outside (0, K)")
        return law.density(y)

    return {"atom0": law.atom_at(0.0), "atomK": law.atom_at(K), "density": density, "law": law}


def reflected_lst(component, x, K, alpha, beta):
    """``E_x exp(-alpha V(T_beta))`` from the scale-function formula.

    For a non-subordinator this evaluates

        (e^{-aK} + int_0^K a e^{-ay} W(y)/W(K) dy) Z(K-x)
            - beta e^{-ax} int_0^{K-x} e^{-ay} W(y) dy,

    and for a subordinator
    ``e^{-aK} P(Y(T) >= K-x) + e^{-ax} E[e^{-a Y(T)}; Y(T) < K-x]``.
    """
    if component.is_subordinator:
        law = free_law(component, beta)
        if x >= K:
            return complex(np.exp(-alpha * K))
        u = K - x
        body = law.atom0 + np.sum(law.c * u * phi1((law.rho - alpha) * u))
        return complex(np.exp(-alpha * K) * law.tail(u) + np.exp(-alpha * x) * body)
    rep = scale_functions(component, beta)
    return complex(_nonsub_lst(rep, x, K, alpha))


def _nonsub_lst(rep, x, K, alpha):
    # The formula above cancels terms of size exp(psi (K - x)); the growing
    # exponential is removed analytically so that large K stays accurate.
    beta, t0, c0 = rep.beta, rep.psi, rep.c[0]
    tr, cr = rep.rest()
    d = t0 - alpha
    if abs(d) < 1e-8 * (1 + abs(t0)):
        return _nonsub_lst(rep, x, K, alpha + 1e-6) * 0.5 + _nonsub_lst(rep, x, K, alpha - 1e-6) * 0.5

    def rest_int(u, a):
        return np.sum(cr * u * phi1((tr - a) * u))

    decay = np.exp(-t0 * K)
    w_hat = c0 + np.sum(cr * np.exp(tr * K)) * decay
    ratio = (c0 * (np.exp(-alpha * K) - decay) / d + rest_int(K, alpha) * decay) / w_hat
    A = np.exp(-alpha * K) + alpha * ratio
    D = alpha / t0 * (rest_int(K, alpha) - (c0 + np.exp(-alpha * K) * np.sum(cr * np.exp(tr * K))) / d)
    lead = beta * c0 * np.exp(-t0 * x) / w_hat * D
    zr = 1.0 - beta * c0 / t0 + beta * rest_int(K - x, 0.0)
    return lead + A * zr - beta * np.exp(-alpha * x) * (rest_int(K - x, alpha) - c0 / d)


def pk_limit(component, x, alpha, beta):
    """Infinite-buffer limit ``beta/(beta - phi(a)) (e^{-ax} - a/psi e^{-psi x})``."""
    psi = right_inverse_psi(component, beta)
    phi = component.exponent(alpha)
    return complex(beta / (beta - phi) * (np.exp(-alpha * x) - alpha / psi * np.exp(-psi * x)))


def zeta_scalar(component, alpha, beta, gamma):
    """``u``-transform ``int_0^inf e^{-gamma u} eta(u, alpha, beta) du``."""
    pa = component.exponent(alpha)
    pg = component.exponent(gamma)
    if component.is_subordinator:
        return complex((pa - pg) / ((beta - pg) * (gamma - alpha)))
    psi = scale_functions(component, beta).psi
    return complex(((pa - pg) / (gamma - alpha) - (pa - beta) / (psi - alpha)) / (beta - pg))


def overshoot_scalar(component, u, alpha, beta):
    """Overshoot transform ``E[exp(-alpha (Y(tau(u)) - u)); tau(u) < T_beta]``.

    ``tau(u)`` is the first time the process strictly exceeds ``u``.
    """
    pa = component.exponent(alpha)
    if component.is_subordinator:
        law = free_law(component, beta)
        terms = -law.c * np.exp(law.rho * u) / (law.rho - alpha)
        return complex((beta - pa) / beta * np.sum(terms))
    rep = scale_functions(component, beta)
    # exp(a u)(1 - (phi(a) - beta) int_0^u e^{-ay} W) + (phi(a) - beta) W(u) / (psi - a),
    # with the psi term and the constant cancelled through the partial fractions of W
    tr, cr = rep.rest()
    terms = cr * np.exp(tr * u) * (1.0 / (rep.psi - alpha) - 1.0 / (tr - alpha))
    return complex((pa - beta) * np.sum(terms))
