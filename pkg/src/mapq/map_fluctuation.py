"""Matrix fluctuation objects for a Markov additive process with killing.

Everything here hinges on the roots of ``det(F(g) - beta I) = 0``. After
clearing the (rational) jump-transform denominators row by row the
determinant becomes a polynomial in ``g``; all of its roots are simple under
the standing assumptions. Exactly ``d_minus`` of them (one per
non-subordinator state) lie in the right half plane. They fix the unknown
boundary constants ``kappa_bar`` of the overshoot transform. The remaining
left-half-plane roots are the poles whose residues give the overshoot
transform ``eta`` and the scale matrix ``W`` as exponential sums.

Internally the states are ordered with the non-subordinators first. The
module-level functions accept a model in the user's order and return
matrices in that order.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NumericalError
from .expsum import ExpSum, phi1
from .model_core import build_F, build_F_prime, det_polynomial, lst_poles, to_user_order
from .polyroots import MultipleRootError, check_simple, polished_roots

PERTURB = 1e-6
MAX_HOMOTOPY_STEPS = 64
DET_TOL = 1e-9
KAPPA_TOL = 1e-7


@dataclass
class RootSet:
    """Right-half-plane roots of ``det(F(g) - beta I)``."""

    beta: complex
    roots: np.ndarray
    provenance: str
    diagnostics: list = field(default_factory=list)


def kappa_check(spec, alpha, gamma):
    """Difference quotient ``(F(gamma) - F(alpha)) / (gamma - alpha)``.

    At ``gamma == alpha`` the entrywise derivative ``F'(alpha)`` is returned.
    """
    if gamma == alpha:
        return build_F_prime(spec, alpha)
    return (build_F(spec, gamma) - build_F(spec, alpha)) / (gamma - alpha)


class FluctuationCache:
    """Per-``beta`` root and residue data of an ordered model.

    Parameters
    ----------
    spec : ModelSpec
        Model with the non-subordinator states first.
    beta : complex
        Killing rate, ``Re beta > 0``.
    """

    def __init__(self, spec, beta):
        if not spec.is_ordered:
            raise ValueError("FluctuationCache needs an ordered model")
        if not spec.is_rational:
            raise NumericalError("the analytic engine needs rational jump transforms")
        self.spec = spec
        self.K = spec.capacity
        self.d = spec.d
        self.dm = spec.d_minus
        self.diagnostics = []
        beta = complex(beta)
        try:
            self._setup(beta)
        except MultipleRootError as exc:
            shifted = beta + PERTURB * (1 + abs(beta))
            self.diagnostics.append(f"{exc}; beta perturbed to {shifted}")
            self._setup(shifted)
        self._kappa = {}
        self._build_exit_sums()

    # -- roots ----------------------------------------------------------------
    def _all_roots(self, beta):
        roots = polished_roots(det_polynomial(self.spec, beta))
        check_simple(roots, 1e-7)
        return roots

    def _setup(self, beta):
        self.beta = beta
        roots = self._all_roots(beta)
        for rate in lst_poles(self.spec):
            if np.any(np.abs(roots + rate) < 1e-8 * (1 + rate)):
                raise NumericalError(f"determinant root at transform pole -{rate}")
        if abs(beta.imag) < 1e-14 * (1 + abs(beta)):
            rhp_mask = roots.real > 0
            self.provenance = "direct-selection"
        else:
            rhp_mask = self._homotopy(beta, roots)
            self.provenance = "homotopy-from-real"
        if int(rhp_mask.sum()) != self.dm:
            raise NumericalError(
                f"root count mismatch at beta={beta}: {int(rhp_mask.sum())} right-half roots, "
                f"expected {self.dm}")
        self.rhp = roots[rhp_mask]
        self.lhp = roots[~rhp_mask]
        self.rhp = self.rhp[np.argsort(-self.rhp.real)]
        d, dm = self.d, self.dm
        self.A = np.zeros((d, dm), dtype=complex)
        self.Wl = np.zeros((dm, d), dtype=complex)
        for k, g in enumerate(self.rhp):
            v, w, s = self._null_vectors(g)
            self.A[:, k] = v / s
            self.Wl[k] = w
        self.R = np.zeros((len(self.lhp), d, d), dtype=complex)
        for n, g in enumerate(self.lhp):
            v, w, s = self._null_vectors(g)
            self.R[n] = np.outer(v, w) / s
        self.Fbar_rhp = [build_F(self.spec, g) - beta * np.eye(d) for g in self.rhp]
        self.cof = [self._cofactor_column(M) for M in self.Fbar_rhp]

    def _homotopy(self, beta, final_roots):
        """Follow the right-half roots from ``Re beta`` to ``beta``."""
        anchor = complex(beta.real)
        roots = self._all_roots(anchor)
        track = roots[roots.real > 0]
        if len(track) != self.dm:
            raise NumericalError(f"root tracking lost: {len(track)} anchor roots at beta={anchor}")
        h = 1.0 / int(np.clip(np.ceil(4 * abs(beta.imag) / max(beta.real, 1.0)), 4, MAX_HOMOTOPY_STEPS))
        t, prev, evals = 0.0, None, 0
        while t < 1.0:
            h = min(h, 1.0 - t)
            t_new = t + h
            b = anchor + 1j * beta.imag * t_new
            cand = final_roots if t_new >= 1.0 else self._all_roots(b)
            evals += 1
            # linear predictor from the previous accepted step
            guess = track if prev is None else track + (track - prev[0]) * (h / prev[1])
            new, ok = [], True
            for g in guess:
                dist = np.abs(cand - g)
                order = np.argsort(dist)
                if len(cand) > 1 and dist[order[0]] > 0.25 * dist[order[1]]:
                    ok = False
                    break
                new.append(cand[order[0]])
            if ok and len(set(np.round(new, 12))) == len(new):
                prev = (track, h)
                track = np.array(new)
                t = t_new
                h *= 1.5
                continue
            h /= 4
            if h < 1e-6 or evals > 20 * MAX_HOMOTOPY_STEPS:
                raise NumericalError(f"root tracking lost at beta={b} after {evals} steps")
        self.diagnostics.append(f"homotopy from beta={anchor} in {evals} steps")
        mask = np.zeros(len(final_roots), dtype=bool)
        for g in track:
            mask[int(np.argmin(np.abs(final_roots - g)))] = True
        if np.any(track.real <= 0):
            raise NumericalError(f"root tracking lost: tracked root left the right half plane at beta={beta}")
        return mask

    def _null_vectors(self, g):
        M = build_F(self.spec, g) - self.beta * np.eye(self.d)
        scale = np.prod(np.sum(self._magnitudes(g), axis=1))
        if abs(np.linalg.det(M)) > DET_TOL * scale:
            raise NumericalError(f"root {g} fails the determinant check")
        U, S, Vh = np.linalg.svd(M)
        v = Vh[-1].conj()
        w = U[:, -1].conj()
        s = w @ build_F_prime(self.spec, g) @ v
        return v, w, s

    def _magnitudes(self, g):
        """Entrywise size of the terms making up ``F(g) - beta I``."""
        spec = self.spec
        mag = np.abs(build_F(spec, g))
        for i, c in enumerate(spec.components):
            mag[i, i] = (abs(spec.Q_array[i, i]) + abs(self.beta) + abs(c.drift * g)
                         + 0.5 * c.sigma ** 2 * abs(g) ** 2
                         + c.jump_rate * (1 + abs(c.jump_dist.lst(g))))
        return mag

    @staticmethod
    def _cofactor_column(M, col=0):
        d = M.shape[0]
        if d == 1:
            return np.ones(1, dtype=complex)
        out = np.zeros(d, dtype=complex)
        keep_c = [c for c in range(d) if c != col]
        for m in range(d):
            keep_r = [r for r in range(d) if r != m]
            out[m] = (-1) ** (m + col) * np.linalg.det(M[np.ix_(keep_r, keep_c)])
        return out

    # -- boundary constants and overshoot ----------------------------------------
    def root_set(self):
        return RootSet(self.beta, self.rhp.copy(), self.provenance, list(self.diagnostics))

    def kappa_bar(self, alpha):
        """Boundary constants ``kappa_bar(alpha, beta)`` (rows of D+ are zero)."""
        key = complex(alpha)
        if key in self._kappa:
            return self._kappa[key]
        d, dm = self.d, self.dm
        out = np.zeros((d, d), dtype=complex)
        if dm:
            lhs = np.zeros((dm, dm), dtype=complex)
            rhs = np.zeros((dm, d), dtype=complex)
            for k, g in enumerate(self.rhp):
                row = self.cof[k]
                if np.linalg.norm(row[:dm]) < 1e-10 * np.linalg.norm(row):
                    row = self.Wl[k]
                lhs[k] = row[:dm]
                rhs[k] = -row @ kappa_check(self.spec, alpha, g)
            if np.linalg.cond(lhs) > 1e13:
                lhs = self.Wl[:, :dm].copy()
                rhs = np.array([-self.Wl[k] @ kappa_check(self.spec, alpha, g)
                                for k, g in enumerate(self.rhp)])
                if np.linalg.cond(lhs) > 1e13:
                    raise NumericalError("kappa system singular")
                self.diagnostics.append("kappa subsystem solved with left null vectors")
            out[:dm] = np.linalg.solve(lhs, rhs)
        self._kappa[key] = out
        return out

    def pole_residuals(self, alpha):
        """Largest scaled ``det`` of ``F(g_k) - beta I`` with a column replaced by ``kappa_j``."""
        kb = self.kappa_bar(alpha)
        worst = 0.0
        for k, g in enumerate(self.rhp):
            kc = kappa_check(self.spec, alpha, g)
            kap = kb + kc
            kmag = np.linalg.norm(kb, axis=0) + np.linalg.norm(kc, axis=0)
            M = self.Fbar_rhp[k]
            cols = np.linalg.norm(self._magnitudes(g), axis=0)
            for j in range(self.d):
                for i in range(self.d):
                    Mi = M.copy()
                    Mi[:, i] = kap[:, j]
                    scale = np.prod(np.delete(cols, i)) * max(cols[i], kmag[j])
                    worst = max(worst, abs(np.linalg.det(Mi)) / scale)
        return worst

    def eta_residues(self, alpha):
        """Residue matrices ``H_rho(alpha)`` so that ``eta(u) = sum e^{rho u} H_rho``."""
        kb = self.kappa_bar(alpha)
        Fa = build_F(self.spec, alpha) - self.beta * np.eye(self.d)
        out = np.empty_like(self.R)
        for n, rho in enumerate(self.lhp):
            out[n] = self.R[n] @ (kb - Fa / (rho - alpha))
        return out

    def eta(self, u, alpha):
        """Overshoot transform ``eta(u, alpha, beta)``."""
        H = self.eta_residues(alpha)
        return np.einsum("n,npq->pq", np.exp(self.lhp * u), H)

    def eta_sum(self, alpha):
        """``eta(K - y, alpha)`` as an exponential sum in ``y``."""
        H = self.eta_residues(alpha)
        return ExpSum(-self.lhp, np.full(len(self.lhp), self.K), H)

    def zeta(self, alpha, gamma):
        """``(F(gamma) - beta I)^{-1} (kappa_bar(alpha) + kappa_check(alpha, gamma))``."""
        M = build_F(self.spec, gamma) - self.beta * np.eye(self.d)
        if np.linalg.cond(M) > 1e14:
            raise NumericalError("zeta pole: gamma is a determinant root")
        return np.linalg.solve(M, self.kappa_bar(alpha) + kappa_check(self.spec, alpha, gamma))

    # -- scale matrix and exit probabilities ----------------------------------------
    def W(self, y):
        """Scale matrix ``W(y)`` (``d x d_minus``), plain residue sum."""
        out = np.zeros((self.d, self.dm), dtype=complex)
        for k, g in enumerate(self.rhp):
            out += np.exp(g * y) * np.outer(self.A[:, k], self.Wl[k, :self.dm])
        out += np.einsum("n,npq->pq", np.exp(self.lhp * y), self.R[:, :, :self.dm])
        return out

    def int_W(self, u):
        out = np.zeros((self.d, self.dm), dtype=complex)
        for k, g in enumerate(self.rhp):
            out += u * phi1(g * u) * np.outer(self.A[:, k], self.Wl[k, :self.dm])
        out += np.einsum("n,npq->pq", u * phi1(self.lhp * u), self.R[:, :, :self.dm])
        return out

    def Z(self, u):
        """Secondary scale matrix ``I - int_0^u W (Q - beta I)`` (no subordinators)."""
        if self.dm != self.d:
            raise ValueError("the secondary scale matrix needs a model without subordinators")
        return np.eye(self.d) - self.int_W(u) @ (self.spec.Q_array - self.beta * np.eye(self.d))

    def W_laplace(self, alpha):
        """``(F(alpha) - beta I)^{-1}`` restricted to the first ``d_minus`` columns."""
        M = build_F(self.spec, alpha) - self.beta * np.eye(self.d)
        return np.linalg.inv(M)[:, :self.dm]

    def _exit_factors(self, L):
        dm = self.dm
        EL = np.exp(-self.rhp * L)
        Ai = np.linalg.inv(self.A[:dm])
        Bi = np.linalg.inv(self.Wl[:, :dm])
        Lm = np.einsum("n,npq->pq", np.exp(self.lhp * L), self.R[:, :dm, :dm])
        M = Ai @ Lm @ Bi
        N = np.linalg.solve(np.eye(dm) + M * EL[None, :], Ai)
        G = (Bi * EL[None, :]) @ N
        return N, G

    def delta_minus(self, u_minus, u_plus):
        """``P(sigma(u_minus) < min(tau(u_plus), T), J = j)`` (``d x d``)."""
        out = np.zeros((self.d, self.d), dtype=complex)
        if self.dm == 0:
            return out
        N, G = self._exit_factors(u_minus + u_plus)
        first = (self.A * np.exp(-self.rhp * u_minus)[None, :]) @ N
        second = np.einsum("n,npq->pq", np.exp(self.lhp * u_plus), self.R[:, :, :self.dm]) @ G
        out[:, :self.dm] = first + second
        return out

    def p_plus(self, u):
        """``P(tau(u) < T, J(tau) = j)`` as ``eta(u, 0, beta)``."""
        return self.eta(u, 0.0)

    def delta_plus(self, u_minus, u_plus):
        return self.p_plus(u_plus) - self.delta_minus(u_minus, u_plus) @ self.p_plus(u_minus + u_plus)

    def _build_exit_sums(self):
        """``delta_minus(y, K - y)`` and ``delta_plus(y, K - y)`` as sums in ``y``."""
        d, dm, K = self.d, self.dm, self.K
        if dm:
            N, G = self._exit_factors(K)
            coefs = np.zeros((dm, d, d), dtype=complex)
            for k in range(dm):
                coefs[k, :, :dm] = np.outer(self.A[:, k], N[k])
            lcoefs = np.zeros((len(self.lhp), d, d), dtype=complex)
            lcoefs[:, :, :dm] = self.R[:, :, :dm] @ G
            self.dminus_sum = ExpSum(np.concatenate([-self.rhp, -self.lhp]),
                                     np.concatenate([np.zeros(dm), np.full(len(self.lhp), K)]),
                                     np.concatenate([coefs, lcoefs]))
        else:
            self.dminus_sum = ExpSum.zeros(d, d)
        pp = self.eta_sum(0.0)
        self.pplus_K = self.p_plus(K)
        self.dplus_sum = pp - self.dminus_sum.right(self.pplus_K)


@lru_cache(maxsize=512)
def get_cache(spec, beta):
    """Memoized :class:`FluctuationCache` for an ordered model."""
    return FluctuationCache(spec, beta)


def _ordered(spec):
    ordered, perm = spec.ordering
    return ordered, perm


# -- public functions in user order ---------------------------------------------

def rhp_roots(spec, beta):
    """Right-half-plane roots ``g_k(beta)`` of ``det(F(g) - beta I)``."""
    ordered, _ = _ordered(spec)
    return get_cache(ordered, complex(beta)).root_set()


def solve_kappa_bar(spec, alpha, beta):
    """Boundary constants ``kappa_bar(alpha, beta)`` in user order."""
    ordered, perm = _ordered(spec)
    return to_user_order(get_cache(ordered, complex(beta)).kappa_bar(alpha), perm)


def zeta_matrix(spec, alpha, beta, gamma):
    """Double transform ``int e^{-gamma u} eta(u, alpha, beta) du``."""
    ordered, perm = _ordered(spec)
    return to_user_order(get_cache(ordered, complex(beta)).zeta(alpha, gamma), perm)


def eta_matrix(spec, u, alpha, beta):
    """Overshoot transform ``E[e^{-alpha(Y(tau(u)) - u)}; tau(u) < T, J(tau(u)) = j]``."""
    ordered, perm = _ordered(spec)
    return to_user_order(get_cache(ordered, complex(beta)).eta(u, alpha), perm)


def delta_minus(spec, u_minus, u_plus, beta):
    """Probability of reaching ``-u_minus`` first, jointly with the state there."""
    ordered, perm = _ordered(spec)
    return to_user_order(get_cache(ordered, complex(beta)).delta_minus(u_minus, u_plus), perm)


def delta_plus(spec, u_minus, u_plus, beta):
    """Probability of exceeding ``u_plus`` first, jointly with the state there."""
    ordered, perm = _ordered(spec)
    return to_user_order(get_cache(ordered, complex(beta)).delta_plus(u_minus, u_plus), perm)


@dataclass
class ScaleMatrixRep:
    """Scale matrix of an ordered model; columns index the non-subordinators."""

    cache: FluctuationCache
    perm: np.ndarray

    @property
    def poles(self):
        return np.concatenate([self.cache.rhp, self.cache.lhp])

    def W(self, y):
        return self.cache.W(y)

    def Z(self, u):
        return self.cache.Z(u)

    def laplace(self, alpha):
        return self.cache.W_laplace(alpha)


def scale_matrix(spec, beta):
    """Scale matrix representation (in the internal, non-subordinators-first order)."""
    ordered, perm = _ordered(spec)
    return ScaleMatrixRep(get_cache(ordered, complex(beta)), perm)
