"""Workload of the finite buffer at an exponential time.

Starting from level ``x`` in state ``i``, the free process either reaches
``-x`` first (the workload hits 0), exceeds ``K - x`` first (the buffer
overflows and the workload sits at ``K``) or is killed first. This splits the
transform of ``V(T_beta)`` into

    chi(x) = delta_minus(x) chi(0) + delta_plus(x) chi(K) + delta_star(x),

and the two boundary rows ``chi(0)``, ``chi(K)`` follow from conditioning on
the first background transition or killing epoch from the boundary. The
resulting ``2d x 2d`` system has a strictly diagonally dominant matrix.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .expsum import ExpSum, restart_expect
from .map_fluctuation import get_cache
from .model_core import build_Phi, lst_poles, to_user_order
from .scalar_levy import reflected_law

ROOT_GUARD = 1e-3
GUARD_NODES = 8
MOMENT_NODES = 32


@dataclass
class BoundarySystem:
    """``(I - P) [chi(0); chi(K)] = [b0; bK]`` (internal state order)."""

    P: np.ndarray
    b0: np.ndarray
    bK: np.ndarray
    omega: np.ndarray

    @property
    def margin(self):
        """Smallest gap ``1 - sum_l |P_il|`` over the rows."""
        return float(np.min(1.0 - np.sum(np.abs(self.P), axis=1)))


@dataclass
class ChiResult:
    """``E_{x,i}[exp(-alpha V(T_beta)); J(T_beta) = j]`` and the boundary rows."""

    chi0: np.ndarray
    chiK: np.ndarray
    chi_x: np.ndarray
    x: float
    alpha: complex
    beta: complex


def _anchored(rate, coef, K):
    """Single-term ExpSum ``coef * exp(rate y)`` with a safe anchor."""
    anchor = K if np.real(rate) > 0 else 0.0
    return ExpSum([rate], [anchor], (coef * np.exp(rate * anchor))[None])


def _flat_kill_matrix(spec, beta):
    """Probability of being killed before the level moves, for flat states.

    While the chain stays among states with zero drift and no Brownian part
    and no jump occurs, the workload does not move. Row ``s`` gives the
    probability of being killed during that sojourn, jointly with the state.
    """
    d = spec.d
    out = np.zeros((d, d), dtype=complex)
    S = [i for i, c in enumerate(spec.components) if c.is_flat]
    if not S:
        return out
    Q = spec.Q_array
    A = np.zeros((len(S), len(S)))
    diag = np.zeros(len(S), dtype=complex)
    for a, s in enumerate(S):
        diag[a] = beta + spec.components[s].jump_rate + spec.q[s]
        for b, t in enumerate(S):
            if s != t and spec.transition_jumps[s][t].is_zero:
                A[a, b] = Q[s, t]
    out[np.ix_(S, S)] = beta * np.linalg.inv(np.diag(diag) - A)
    return out


class TransientSolver:
    """Boundary system of an ordered model at one killing rate ``beta``."""

    def __init__(self, spec, beta):
        self.spec = spec
        self.beta = complex(beta)
        self.K = K = spec.capacity
        self.d = d = spec.d
        self.cache = get_cache(spec, self.beta)
        self.omega = self.beta + spec.q
        self.laws = {x: [reflected_law(c, x, K, self.omega[i]) for i, c in enumerate(spec.components)]
                     for x in (0.0, K)}
        self.flat = _flat_kill_matrix(spec, self.beta)
        self._targets = self._transition_targets()
        P = np.zeros((2 * d, 2 * d), dtype=complex)
        for bx, x in enumerate((0.0, K)):
            for i, k, w in self._targets:
                law = self.laws[x][i]
                jump = spec.transition_jumps[i][k]
                P[bx * d + i, :d] += w * restart_expect(law, jump, self.cache.dminus_sum.row(k), K)[0]
                P[bx * d + i, d:] += w * restart_expect(law, jump, self.cache.dplus_sum.row(k), K)[0]
        self.P = P
        self._check_dominance()
        self.lu = linalg.lu_factor(np.eye(2 * d) - P)
        self._roots = np.concatenate([self.cache.rhp, self.cache.lhp,
                                      -np.asarray(lst_poles(spec), dtype=float)])

    def _transition_targets(self):
        Q = self.spec.Q_array
        out = []
        for i in range(self.d):
            for k in range(self.d):
                if k != i and Q[i, k] > 0:
                    out.append((i, k, Q[i, k] / self.omega[i]))
        return out

    def _check_dominance(self):
        if abs(self.beta.imag) > 1e-14 * abs(self.beta):
            return
        rows = np.sum(np.abs(self.P), axis=1)
        bound = np.tile(self.spec.q / (self.spec.q + self.beta.real), 2)
        if np.any(rows > bound + 1e-9):
            k = int(np.argmax(rows - bound))
            raise NumericalError(
                f"boundary system not diagonally dominant in row {k}: {rows[k]:.6g} > {bound[k]:.6g}")

    # -- right-hand sides -------------------------------------------------------
    def delta_star_sum(self, alpha):
        """``delta_star(y)`` for ``y`` in ``[0, K]`` as an exponential sum."""
        K = self.K
        Phi = build_Phi(self.spec, alpha, self.beta)
        etaK = self.cache.eta(K, alpha)
        out = _anchored(-alpha, Phi, K)
        out = out + self.cache.dminus_sum.right(-Phi + np.exp(-alpha * K) * etaK @ Phi)
        out = out - self.cache.eta_sum(alpha).right(np.exp(-alpha * K) * Phi)
        return out

    def _kill_terms(self, alpha):
        """``E_x exp(-alpha V_i(T_omega))`` for ``x`` in ``{0, K}``."""
        g = _anchored(-alpha, np.ones((1, 1)), self.K)
        return {x: np.array([law.expect(g)[0, 0] for law in self.laws[x]]) for x in (0.0, self.K)}

    def rhs(self, alpha):
        d, K = self.d, self.K
        ds = self.delta_star_sum(alpha)
        kill = self._kill_terms(alpha)
        b = np.zeros((2 * d, d), dtype=complex)
        for bx, x in enumerate((0.0, K)):
            for i in range(d):
                b[bx * d + i, i] += self.beta / self.omega[i] * kill[x][i]
            for i, k, w in self._targets:
                b[bx * d + i] += w * restart_expect(self.laws[x][i], self.spec.transition_jumps[i][k],
                                                    ds.row(k), K)[0]
        return b, ds

    def solve(self, b):
        sol = linalg.lu_solve(self.lu, b)
        resid = np.max(np.abs((np.eye(2 * self.d) - self.P) @ sol - b))
        if resid > 1e-9 * max(1.0, np.max(np.abs(b))):
            raise NumericalError(f"boundary solve residual {resid:.2g}")
        return sol[:self.d], sol[self.d:]

    def system(self, alpha):
        b, _ = self.rhs(alpha)
        return BoundarySystem(self.P, b[:self.d], b[self.d:], self.omega)

    # -- transforms -------------------------------------------------------------
    def _near_root(self, alpha):
        return np.min(np.abs(self._roots - alpha)) < ROOT_GUARD * (1 + abs(alpha))

    def chi(self, x, alpha):
        """``chi(0)``, ``chi(K)`` and ``chi(x)`` at one ``alpha``."""
        if self._near_root(alpha):
            # delta_star is entire in alpha; average over a small circle
            h = ROOT_GUARD * (1 + abs(alpha)) * 2
            nodes = alpha + h * np.exp(2j * np.pi * (np.arange(GUARD_NODES) + 0.5) / GUARD_NODES)
            parts = [self._chi_direct(x, a) for a in nodes]
            return tuple(sum(p[k] for p in parts) / GUARD_NODES for k in range(3))
        return self._chi_direct(x, alpha)

    def _chi_direct(self, x, alpha):
        b, ds = self.rhs(alpha)
        chi0, chiK = self.solve(b)
        return chi0, chiK, self._interior(x, chi0, chiK, ds)

    def _interior(self, x, chi0, chiK, ds):
        if x == 0:
            return chi0
        if x == self.K:
            return chiK
        return self.cache.dminus_sum(x) @ chi0 + self.cache.dplus_sum(x) @ chiK + ds(x)

    def moment_radius(self):
        dist = np.min(np.abs(self._roots)) if len(self._roots) else np.inf
        return min(0.5, 4.0 / self.K, 0.5 * dist)

    def moments(self, x, orders=(1, 2), nodes=MOMENT_NODES):
        """``E_{x,i}[V(T)^n; J(T) = j]`` by Cauchy integrals around ``alpha = 0``."""
        r = self.moment_radius()
        theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
        vals = [self._chi_direct(x, a)[2] for a in r * np.exp(1j * theta)]
        out = {}
        for n in orders:
            coef = sum(v * np.exp(-1j * n * t) for v, t in zip(vals, theta)) / nodes
            out[n] = (-1) ** n * factorial(n) * coef / r ** n
        return out

    def _atom(self, which):
        """Boundary rows and interior map for ``P(V = 0)`` or ``P(V = K)``."""
        d, K = self.d, self.K
        b = np.zeros((2 * d, d), dtype=complex)
        for bx, x in enumerate((0.0, K)):
            for i in range(d):
                law = self.laws[x][i]
                b[bx * d + i, i] += self.beta / self.omega[i] * law.atom_at(0.0 if which == 0 else K)
            for i, k, w in self._targets:
                if not np.any(self.flat[k]):
                    continue
                law = self.laws[x][i]
                jump = self.spec.transition_jumps[i][k]
                if which == 0:
                    mass = law.atom_at(0.0) if jump.is_zero else 0.0
                elif jump.is_zero:
                    mass = law.atom_at(K)
                else:
                    mass = law.expect_values(lambda v: jump.sf(K - v))
                b[bx * d + i] += w * mass * self.flat[k]
        return self.solve(b)

    def empty_prob(self, x):
        chi0, chiK = self._atom(0)
        return self._interior(x, chi0, chiK, ExpSum.zeros(self.d, self.d))

    def full_prob(self, x):
        chi0, chiK = self._atom(1)
        return self._interior(x, chi0, chiK, ExpSum.zeros(self.d, self.d))


@lru_cache(maxsize=512)
def get_solver(spec, beta):
    """Memoized :class:`TransientSolver` for an ordered model."""
    return TransientSolver(spec, complex(beta))


def _solver(spec, beta):
    ordered, perm = spec.ordering
    return get_solver(ordered, complex(beta)), perm


def _real_if(matrix, beta, alpha=0.0):
    if np.imag(beta) == 0 and np.imag(alpha) == 0:
        if np.max(np.abs(np.imag(matrix)), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(matrix))):
            raise NumericalError("imaginary residue in a real-argument result")
        return np.real(matrix)
    return matrix


def _check_x(spec, x):
    if not 0 <= x <= spec.capacity:
        raise ValueError(f"initial workload {x} outside [0, {spec.capacity}]")


# -- public functions in user order ---------------------------------------------

def delta_star(spec, x, alpha, beta):
    """``E_{x,i}[exp(-alpha (x + Y(T))); T first, J(T) = j]`` (killing before both exits)."""
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.delta_star_sum(alpha)(x), beta, alpha), perm)


def build_boundary_system(spec, alpha, beta):
    """Assembled boundary system (states in the internal order)."""
    solver, _ = _solver(spec, beta)
    return solver.system(alpha)


def chi(spec, x, alpha, beta):
    """Transform ``E_{x,i}[exp(-alpha V(T_beta)); J(T_beta) = j]``.

    Parameters
    ----------
    spec : ModelSpec
    x : float
        Initial workload in ``[0, K]``.
    alpha, beta : complex
        Transform argument and killing rate.

    Returns
    -------
    ChiResult
        Matrices in the user's state order.
    """
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    chi0, chiK, chix = solver.chi(x, alpha)
    conv = [to_user_order(_real_if(m, beta, alpha), perm) for m in (chi0, chiK, chix)]
    return ChiResult(*conv, x=x, alpha=alpha, beta=beta)


def moment(spec, x, n, beta):
    """``E_{x,i}[V(T_beta)^n; J(T_beta) = j]`` for ``n`` in ``{1, 2}``."""
    if n not in (1, 2):
        raise ValueError("moment order must be 1 or 2")
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.moments(x, (n,))[n], beta), perm)


def moments(spec, x, beta, orders=(1, 2)):
    """Several moments from one set of contour evaluations (user order)."""
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return {n: to_user_order(_real_if(m, beta), perm) for n, m in solver.moments(x, orders).items()}


def empty_prob(spec, x, beta):
    """``P_{x,i}(V(T_beta) = 0, J(T_beta) = j)``."""
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.empty_prob(x), beta), perm)


def full_prob(spec, x, beta):
    """``P_{x,i}(V(T_beta) = K, J(T_beta) = j)``."""
    _check_x(spec, x)
    solver, perm = _solver(spec, beta)
    return to_user_order(_real_if(solver.full_prob(x), beta), perm)


def cdf_and_full_prob(spec, x, y, beta, terms=18, check=True):
    """``P_{x,i}(V(T) <= y, J(T) = j)`` by inversion in ``alpha``, plus the atom at ``K``.

    The CDF is inverted from ``chi(x, alpha) / alpha``. The atom at ``K`` is
    reported twice: from the boundary system and as the initial value of the
    CDF of ``K - V(T)``, whose transform is ``exp(-s K) chi(x, -s)``. That CDF
    is inverted at a few small levels and extrapolated to 0 by a quadratic
    fit, since a direct inversion just below ``K`` smears the jump.

    Returns
    -------
    cdf : ndarray
    full : ndarray
        Atom at ``K`` from the boundary system.
    full_check : ndarray or None
        Extrapolated ``P(K - V(T) <= 0, J(T) = j)``; ``None`` when ``check``
        is false.
    """
    from .inversion import euler_invert, euler_nodes

    _check_x(spec, x)
    if not 0 <= y < spec.capacity:
        raise ValueError("y must lie in [0, K)")
    solver, perm = _solver(spec, beta)
    K = spec.capacity

    def transform(a):
        return solver.chi(x, a)[2] / a

    def reflected(s):
        return np.exp(-s * K) * solver.chi(x, -s)[2] / s

    cplx = np.imag(beta) != 0
    cdf, _ = euler_invert(transform, max(y, 1e-12), terms=terms, complex_valued=cplx)
    full = solver.full_prob(x)
    if not check:
        return to_user_order(_real_if(cdf, beta), perm), to_user_order(_real_if(full, beta), perm), None
    # smallest level keeping exp(Re(s) K) finite at every node
    shift = euler_nodes(1.0, terms)[0][0].real
    h = max(shift * K / 600.0, 0.025 * K)
    levels = h * np.array([1.0, 1.5, 2.0, 3.0])
    vals = np.array([euler_invert(reflected, w, terms=terms, complex_valued=cplx)[0] for w in levels])
    coef = np.polyfit(levels, vals.reshape(len(levels), -1), 2)
    full_check = coef[-1].reshape(full.shape)
    out = [to_user_order(_real_if(m, beta), perm) for m in (cdf, full, full_check)]
    return tuple(out)
