"""Exponential sums and laws on a bounded interval.

Every quantity of the analytic engine that depends on a level ``y`` is a
finite sum of exponentials with matrix coefficients. Terms are stored with an
anchor ``a`` chosen so that ``|exp(r (y - a))| <= 1`` on the interval of
interest; this keeps the representation free of overflow and of the
catastrophic cancellation that plain ``exp(r y)`` sums suffer when ``Re r K``
is large.
"""

import numpy as np
from scipy import special

from .errors import NumericalError


def phi1(z):
    """``(exp(z) - 1) / z`` with the removable point handled."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0, np.expm1(safe) / safe)


def _interval_integral(slope, e_lo, e_hi, length):
    """Integral of ``exp(E(y))`` over an interval where ``E`` is affine.

    ``e_lo`` and ``e_hi`` are the exponent values at the ends.
    """
    z = slope * length
    use_hi = np.real(z) > 0
    base = np.where(use_hi, e_hi, e_lo)
    arg = np.where(use_hi, -z, z)
    return np.exp(base) * length * phi1(arg)


class ExpSum:
    """Matrix-valued function ``f(y) = sum_n C_n exp(r_n (y - a_n))``.

    Parameters
    ----------
    rates, anchors : array_like, shape (n,)
    coefs : array_like, shape (n, p, q)
    """

    def __init__(self, rates, anchors, coefs):
        self.rates = np.asarray(rates, dtype=complex).reshape(-1)
        self.anchors = np.asarray(anchors, dtype=float).reshape(-1)
        self.coefs = np.asarray(coefs, dtype=complex)
        if self.coefs.ndim == 1:
            self.coefs = self.coefs[:, None, None]

    @classmethod
    def zeros(cls, p, q):
        return cls(np.zeros(0), np.zeros(0), np.zeros((0, p, q)))

    @classmethod
    def constant(cls, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls([0.0], [0.0], matrix[None])

    @property
    def shape(self):
        return self.coefs.shape[1:]

    def __len__(self):
        return len(self.rates)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        yy = np.atleast_1d(y)
        if len(self) == 0:
            out = np.zeros((len(yy),) + self.shape, dtype=complex)
        else:
            e = np.exp(self.rates[None, :] * (yy[:, None] - self.anchors[None, :]))
            out = np.einsum("yn,npq->ypq", e, self.coefs)
        return out[0] if scalar else out

    def __add__(self, other):
        return ExpSum(np.concatenate([self.rates, other.rates]),
                      np.concatenate([self.anchors, other.anchors]),
                      np.concatenate([self.coefs, other.coefs]))

    def __neg__(self):
        return ExpSum(self.rates, self.anchors, -self.coefs)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return ExpSum(self.rates, self.anchors, c * self.coefs)

    def right(self, matrix):
        """``f(y) @ matrix``."""
        return ExpSum(self.rates, self.anchors, self.coefs @ matrix)

    def left(self, matrix):
        """``matrix @ f(y)``."""
        return ExpSum(self.rates, self.anchors, np.einsum("ab,nbq->naq", matrix, self.coefs))

    def row(self, k):
        return ExpSum(self.rates, self.anchors, self.coefs[:, k:k + 1, :])

    def integrate_against(self, density, lo, hi):
        """``int_lo^hi density(y) f(y) dy`` for a scalar ExpSum ``density``."""
        if len(self) == 0 or len(density) == 0 or hi <= lo:
            return np.zeros(self.shape, dtype=complex)
        r1 = density.rates[:, None]
        a1 = density.anchors[:, None]
        r2 = self.rates[None, :]
        a2 = self.anchors[None, :]
        e_lo = r1 * (lo - a1) + r2 * (lo - a2)
        e_hi = r1 * (hi - a1) + r2 * (hi - a2)
        w = _interval_integral(r1 + r2, e_lo, e_hi, hi - lo)
        w = w * density.coefs[:, 0, 0][:, None]
        return np.einsum("mn,npq->pq", w, self.coefs)

    def integral(self, lo, hi):
        """``int_lo^hi f(y) dy``."""
        return self.integrate_against(ExpSum([0.0], [0.0], np.ones((1, 1, 1))), lo, hi)


class Law:
    """Finite measure on ``[0, K]``: atoms plus an absolutely continuous part.

    The continuous part is either a list of ``(lo, hi, density)`` pieces with
    scalar :class:`ExpSum` densities (integrated in closed form) or a
    quadrature rule ``(nodes, weights)``.
    """

    def __init__(self, atoms=(), pieces=(), nodes=None, weights=None):
        self.atoms = [(float(p), complex(m)) for p, m in atoms]
        self.pieces = list(pieces)
        self.nodes = None if nodes is None else np.asarray(nodes, float)
        self.weights = None if weights is None else np.asarray(weights, complex)

    def atom_at(self, y, tol=1e-12):
        return sum((m for p, m in self.atoms if abs(p - y) <= tol), 0j)

    def expect(self, g):
        """``int g dLaw`` for a matrix-valued ExpSum ``g``."""
        out = np.zeros(g.shape, dtype=complex)
        for p, m in self.atoms:
            out += m * g(p)
        for lo, hi, dens in self.pieces:
            out += g.integrate_against(dens, lo, hi)
        if self.nodes is not None and len(self.nodes):
            out += np.einsum("y,ypq->pq", self.weights, g(self.nodes))
        return out

    def expect_values(self, func):
        """``int func dLaw`` for a vectorized callable (needs quadrature pieces)."""
        out = sum((m * func(np.array([p]))[0] for p, m in self.atoms), 0j)
        for lo, hi, dens in self.pieces:
            x, w = gauss_nodes(lo, hi, 256)
            out = out + np.einsum("y,y...->...", w * dens(x)[:, 0, 0], func(x))
        if self.nodes is not None and len(self.nodes):
            out = out + np.einsum("y,y...->...", self.weights, func(self.nodes))
        return out

    def total_mass(self):
        one = ExpSum.constant(np.ones((1, 1)))
        return complex(self.expect(one)[0, 0])

    def density(self, y):
        """Density of the closed-form part at points ``y``."""
        y = np.atleast_1d(np.asarray(y, float))
        out = np.zeros(len(y), dtype=complex)
        for lo, hi, dens in self.pieces:
            inside = (y > lo) & (y < hi)
            if np.any(inside):
                out[inside] += dens(y[inside])[:, 0, 0]
        return out

    def cdf(self, y):
        """``Law([0, y])`` for the closed-form representation."""
        out = sum((m for p, m in self.atoms if p <= y), 0j)
        one = ExpSum.constant(np.ones((1, 1)))
        for lo, hi, dens in self.pieces:
            if y > lo:
                out += one.integrate_against(dens, lo, min(hi, y))[0, 0]
        return out


def gauss_nodes(lo, hi, n):
    """Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def pullback_exp_mixture(g, weights, rates, K):
    """``h(s) = E g(min(s + B, K))`` for ``B`` a mixture of exponentials.

    Parameters
    ----------
    g : ExpSum
    weights, rates : array_like
        Mixture weights and exponential rates of ``B``.
    K : float

    Returns
    -------
    ExpSum
        ``h`` on ``[0, K]``.
    """
    gK = g(K)
    out_r, out_a, out_c = [], [], []
    for w, mu in zip(weights, rates):
        if w == 0:
            continue
        diff = g.rates - mu
        if np.any(np.abs(diff) < 1e-10 * (1 + mu)):
            raise NumericalError("jump rate coincides with an exponent of the integrand")
        # P(B > K - s) g(K)
        out_r.append([mu])
        out_a.append([K])
        out_c.append((w * gK)[None])
        # int_0^{K-s} w mu e^{-mu b} g(s + b) db, split into two exponentials in s
        fac = (w * mu / diff)[:, None, None] * g.coefs
        out_r.append(np.full(len(g), mu))
        out_a.append(np.full(len(g), K))
        out_c.append(fac * np.exp(g.rates * (K - g.anchors))[:, None, None])
        out_r.append(g.rates)
        out_a.append(g.anchors)
        out_c.append(-fac)
    if not out_r:
        return ExpSum([0.0], [0.0], gK[None])
    return ExpSum(np.concatenate(out_r), np.concatenate(out_a), np.concatenate(out_c))


def exp_mixture_law(weights, rates, K, atom0=0.0):
    """Sub-probability law of ``B`` restricted to ``[0, K]``."""
    dens = ExpSum(np.negative(rates), np.zeros(len(rates)),
                  (np.asarray(weights) * np.asarray(rates))[:, None, None])
    atoms = [(0.0, atom0)] if atom0 else []
    return Law(atoms=atoms, pieces=[(0.0, K, dens)])


def quadrature_jump_law(jump, K, n):
    """Law of ``B`` on ``[0, K]`` by Gauss-Legendre quadrature of its density."""
    x, w = gauss_nodes(0.0, K, n)
    return Law(nodes=x, weights=w * jump.pdf(x))


def restart_expect(law, jump, g, K, refine=(64, 128, 256), tol=1e-7):
    """``E g(min(V + B, K))`` with ``V ~ law`` and ``B ~ jump`` independent.

    Closed form for zero and exponential-mixture jumps; nested Gauss-Legendre
    quadrature with successive refinement otherwise.
    """
    if jump.is_zero:
        return law.expect(g)
    if jump.is_exp_mixture:
        w, mu = jump.exp_mixture()
        return law.expect(pullback_exp_mixture(g, w, mu, K))
    gK = g(K)
    prev = None
    for n in refine:
        def h(s, n=n):
            out = gK[None] * jump.sf(K - s)[:, None, None]
            xb, wb = np.polynomial.legendre.leggauss(n)
            for k, sk in enumerate(s):
                half = 0.5 * (K - sk)
                if half <= 0:
                    continue
                b = half * (xb + 1.0)
                vals = g(sk + b)
                out[k] += np.einsum("y,ypq->pq", half * wb * jump.pdf(b), vals)
            return out
        val = _law_expect_callable(law, h, n)
        if prev is not None and np.max(np.abs(val - prev)) < tol:
            return val
        prev = val
    raise NumericalError("restart-law quadrature did not converge")


def _law_expect_callable(law, func, n):
    out = sum((m * func(np.array([p]))[0] for p, m in law.atoms), 0j)
    for lo, hi, dens in law.pieces:
        x, w = gauss_nodes(lo, hi, n)
        out = out + np.einsum("y,ypq->pq", w * dens(x)[:, 0, 0], func(x))
    if law.nodes is not None and len(law.nodes):
        out = out + np.einsum("y,ypq->pq", law.weights, func(law.nodes))
    return out


def erlang_tail_transform(shape, rate, K, a):
    """``int_(K, inf) exp(-a (y - K)) dP(B <= y)`` for ``B ~ Erlang(shape, rate)``."""
    z = (rate + a) * K
    terms = sum(z ** m / special.factorial(m) for m in range(shape))
    return (rate / (rate + a)) ** shape * np.exp(-rate * K) * terms


def tail_transform(jump, K, a):
    """``E[exp(-a (B - K)); B > K]`` in closed form for rational jump laws."""
    if jump.is_zero:
        return 0j
    if jump.kind == "erlang":
        return complex(erlang_tail_transform(jump.shape, jump.rates[0], K, a))
    if jump.is_exp_mixture:
        w, mu = jump.exp_mixture()
        return complex(np.sum(w * np.exp(-mu * K) * mu / (mu + a)))
    raise ValueError("tail transform needs a rational jump law")


def jump_law(jump, K, n=256):
    """Law of ``B`` restricted to ``[0, K]`` (mass beyond ``K`` dropped)."""
    if jump.is_zero:
        return Law(atoms=[(0.0, 1.0)])
    if jump.is_exp_mixture:
        w, mu = jump.exp_mixture()
        return exp_mixture_law(w, mu, K)
    return quadrature_jump_law(jump, K, n)
