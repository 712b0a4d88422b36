"""Polynomial roots and partial fractions for rational transforms."""

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NumericalError

MULTIPLICITY_TOL = 1e-8


class MultipleRootError(NumericalError):
    """Two roots of a transform denominator (nearly) coincide."""


def trim(coef, rel=1e-14):
    """Drop negligible leading coefficients of an ascending coefficient array."""
    coef = np.asarray(coef, dtype=complex)
    scale = np.max(np.abs(coef)) if coef.size else 0.0
    if scale == 0:
        return coef[:1]
    nz = np.flatnonzero(np.abs(coef) > rel * scale)
    return coef[: nz[-1] + 1]


def polished_roots(coef, newton_steps=3):
    """All roots of an ascending-coefficient polynomial, refined by Newton steps."""
    coef = trim(coef)
    if len(coef) <= 1:
        return np.zeros(0, dtype=complex)
    roots = npoly.polyroots(coef).astype(complex)
    deriv = npoly.polyder(coef)
    for _ in range(newton_steps):
        p = npoly.polyval(roots, coef)
        dp = npoly.polyval(roots, deriv)
        ok = np.abs(dp) > 0
        step = np.where(ok, p / np.where(ok, dp, 1.0), 0.0)
        trial = roots - step
        better = np.abs(npoly.polyval(trial, coef)) <= np.abs(p)
        roots = np.where(better, trial, roots)
    return roots


def check_simple(roots, tol=MULTIPLICITY_TOL):
    """Raise :class:`MultipleRootError` when two roots nearly coincide."""
    roots = np.asarray(roots)
    for a in range(len(roots)):
        for b in range(a + 1, len(roots)):
            if abs(roots[a] - roots[b]) < tol * (1 + abs(roots[a])):
                raise MultipleRootError(
                    f"multiple root near {roots[a]:.6g} (distance {abs(roots[a] - roots[b]):.2g})")


def partial_fractions(num, den):
    """Simple-pole partial fractions of ``num(a) / den(a)``.

    Returns
    -------
    poles : ndarray
    residues : ndarray
    direct : complex
        Limit of the function as ``a -> inf`` (zero for strictly proper).
    """
    num = trim(num)
    den = trim(den)
    if len(num) > len(den):
        raise NumericalError("rational function is not proper")
    direct = num[-1] / den[-1] if len(num) == len(den) else 0j
    rest = npoly.polysub(num, direct * den)[: len(den) - 1] if len(den) > 1 else np.zeros(1)
    poles = polished_roots(den)
    check_simple(poles)
    residues = npoly.polyval(poles, rest) / npoly.polyval(poles, npoly.polyder(den))
    return poles, residues, complex(direct)
