"""Numerical Laplace inversion by Euler summation.

The Bromwich integral is discretized by the trapezoidal rule on the line
``Re s = A / t`` with ``A = M ln(10) / 3``. The resulting alternating series
is accelerated by binomial averaging of the partial sums ``s_M .. s_2M``.
About ``0.6 M`` significant digits are obtained for smooth functions; the
transform must therefore be accurate to roughly ``10^{-M/3}`` relative to
the final target.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import NumericalError


@dataclass
class InversionConfig:
    """Settings for :func:`invert`.

    Parameters
    ----------
    terms : int
        ``M``; ``2M + 1`` transform evaluations per time point.
    target : float
        Accuracy target; estimates above ``100 * target`` are reported as
        warnings in the diagnostics.
    shift : float or None
        Override for ``A``; the contour is ``Re s = A / t``.
    """

    method: str = "euler"
    terms: int = 18
    target: float = 1e-8
    shift: float = None
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        if self.method != "euler":
            raise ValueError("only Euler summation is available")
        if self.terms < 10:
            raise ValueError("inversion needs at least 10 terms")
        if not self.target > 1e-12:
            raise ValueError("precision target must exceed 1e-12")


def euler_nodes(t, terms=18, shift=None):
    """Contour nodes ``s_k`` and real weights for the inversion at time ``t``.

    ``f(t) ~ sum_k w_k Re F(s_k)``; the binomial averaging is folded into the
    weights. Also returns the weights of the one-shorter average used for the
    error estimate.
    """
    M = int(terms)
    A = M * np.log(10.0) / 3.0 if shift is None else float(shift)
    k = np.arange(2 * M + 1)
    s = (A + 1j * np.pi * k) / t
    sign = (-1.0) ** k
    sign[0] = 0.5
    pref = np.exp(A) / t

    def averaged(m):
        # partial sums s_M .. s_{M+m} averaged with binomial(m, j) / 2^m
        w = np.zeros(2 * M + 1)
        binom = special.comb(m, np.arange(m + 1)) / 2.0 ** m
        for j, c in enumerate(binom):
            w[: M + j + 1] += c
        return pref * sign * w

    return s, averaged(M), averaged(M - 1)


def euler_invert(transform, t, terms=18, shift=None, complex_valued=False):
    """Invert a (possibly array-valued) Laplace transform at ``t > 0``.

    With ``complex_valued`` the original function may be complex (its
    transform is then not conjugate-symmetric), and each node is paired with
    its conjugate: ``f(t) ~ sum_k w_k (F(s_k) + F(conj(s_k))) / 2``.

    Returns
    -------
    value : float or ndarray
    error : float or ndarray
        ``|E(M, M) - E(M, M - 1)|``, the last binomial difference.
    """
    if not t > 0:
        raise ValueError("inversion time must be positive")
    s, w, w_prev = euler_nodes(t, terms, shift)
    if complex_valued:
        vals = [(np.asarray(transform(sk)) + np.asarray(transform(np.conj(sk)))) / 2 for sk in s]
    else:
        vals = [np.real(np.asarray(transform(sk))) for sk in s]
    vals = np.array(vals)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("inversion diverged: non-finite transform value")
    est = np.tensordot(w, vals, axes=1)
    prev = np.tensordot(w_prev, vals, axes=1)
    return est, np.abs(est - prev)


def invert(fhat, t, cfg=None):
    """Value of the inverse transform of ``fhat`` at ``t``.

    Parameters
    ----------
    fhat : callable
        Complex-to-complex (or complex-to-array) transform.
    t : float
    cfg : InversionConfig, optional

    Returns
    -------
    value, error : float or ndarray

    Examples
    --------
    >>> v, e = invert(lambda s: 1.0 / (s + 1.0), 1.0)
    >>> abs(v - np.exp(-1.0)) < 1e-9
    True
    """
    cfg = cfg or InversionConfig()
    value, err = euler_invert(fhat, t, cfg.terms, cfg.shift)
    scale = np.maximum(1.0, np.abs(value))
    if np.any(err > 1e6 * cfg.target * scale):
        raise NumericalError(f"inversion diverged at t={t}: error estimate {np.max(err):.2g}")
    if np.any(err > 100 * cfg.target * scale):
        cfg.diagnostics.append(f"t={t}: error estimate {np.max(err):.2g} above target")
    return value, err


TIME_METRICS = ("mean", "var", "m2", "p_empty", "p_full", "cdf", "idle", "lost")


@dataclass
class TimeSeries:
    """Inverted metric per observation time and initial state."""

    metric: str
    times: np.ndarray
    values: np.ndarray
    errors: np.ndarray


def _beta_domain(spec, x, beta, needs, y=None):
    """Row sums (over the final state) of the needed transforms at one ``beta``."""
    from . import transient_workload as tw

    out = {}
    if "m1" in needs or "m2" in needs:
        mom = tw.moments(spec, x, beta)
        out["m1"] = mom[1].sum(axis=1)
        out["m2"] = mom[2].sum(axis=1)
    if "p_empty" in needs:
        out["p_empty"] = tw.empty_prob(spec, x, beta).sum(axis=1)
    if "p_full" in needs:
        out["p_full"] = tw.full_prob(spec, x, beta).sum(axis=1)
    if "cdf" in needs:
        cdf, _, _ = tw.cdf_and_full_prob(spec, x, y, beta, check=False)
        out["cdf"] = cdf.sum(axis=1)
    if "idle" in needs or "lost" in needs:
        from . import loss_idle as li

        if "idle" in needs:
            out["idle"] = li.expected_idle(spec, x, beta).sum(axis=1)
        if "lost" in needs:
            out["lost"] = li.expected_lost(spec, x, beta).sum(axis=1)
    return out


def _poly_tail_lst(coef, a, s):
    """``int_a^inf p(t) exp(-s t) dt`` for ``p(t) = sum_n coef[n] t^n``."""
    total = 0
    for n, c in enumerate(coef):
        if c == 0:
            continue
        # int_a^inf t^n e^{-st} dt = e^{-sa} sum_k n!/k! a^k / s^(n-k+1)
        acc = sum(special.factorial(n) / special.factorial(k) * a ** k / s ** (n - k + 1) for k in range(n + 1))
        total = total + c * np.exp(-s * a) * acc
    return total


class _FreePath:
    """Contribution of the no-event path, removed before inversion.

    In a state without Brownian part the workload moves linearly until the
    first jump or transition and then rests at 0 or ``K``. Until that event
    every metric is a polynomial in ``t`` on ``[0, t*)`` and on ``[t*, inf)``,
    weighted by ``P(no event before t) = exp(-c t)``. This term is where the
    time functions jump or kink, which inversion resolves poorly, so its
    transform is subtracted in closed form and the term is added back exactly.
    """

    def __init__(self, spec, i, x, key, y=None):
        c = spec.components[i]
        self.active = False
        r = c.drift
        if c.sigma > 0 or r == 0:
            return
        K = spec.capacity
        b = 0.0 if r < 0 else K
        t_star = (b - x) / r
        if t_star <= 0:
            return
        self.rate = c.jump_rate - spec.Q_array[i, i]
        self.t_star = t_star
        before = after = [0.0]
        if key == "m1":
            before, after = [x, r], [b]
        elif key == "m2":
            before, after = [x * x, 2 * x * r, r * r], [b * b]
        elif key == "p_empty" and b == 0:
            after = [1.0]
        elif key == "p_full" and b == K:
            after = [1.0]
        elif key == "idle" and b == 0:
            after = [-t_star, 1.0]
        elif key == "lost" and b == K:
            after = [-r * t_star, r]
        elif key == "cdf":
            # indicator of V <= y; it switches at the time the path crosses y
            if r < 0 and x > y:
                self.t_star = (x - y) / -r
                after = [1.0]
            elif r < 0:
                before, after = [1.0], [1.0]
            elif x <= y:
                self.t_star = (y - x) / r
                before = [1.0]
        self.before = np.array(before, dtype=float)
        self.after = np.array(after, dtype=float)
        self.active = bool(np.any(self.before) or np.any(self.after))

    def lst(self, beta):
        if not self.active:
            return 0.0
        s = beta + self.rate
        diff = np.zeros(max(len(self.before), len(self.after)))
        diff[: len(self.after)] += self.after
        diff[: len(self.before)] -= self.before
        return _poly_tail_lst(self.before, 0.0, s) + _poly_tail_lst(diff, self.t_star, s)

    def value(self, t):
        if not self.active:
            return 0.0
        hb = np.polyval(self.before[::-1], t)
        ha = np.polyval(self.after[::-1], t)
        if abs(t - self.t_star) <= 1e-9 * max(1.0, self.t_star):
            # on the path itself the level is reached, so indicators take the closed side
            h = max(hb, ha)
        else:
            h = hb if t < self.t_star else ha
        return np.exp(-self.rate * t) * h


def invert_time_metrics(spec, x, times, metrics=("mean", "var", "p_empty", "p_full"),
                        cfg=None, y=None):
    """Metrics of ``V(t)`` at deterministic times for every initial state.

    The transform in ``beta`` of ``t -> E_{x,i} g(V(t))`` is ``chi-type(beta) / beta``;
    it is inverted by :func:`euler_invert` for each ``t`` after removing the
    no-event path contribution, which is added back in closed form.

    Returns
    -------
    dict
        ``metric -> TimeSeries`` with ``values`` of shape ``(len(times), d)``
        in the user's state order.
    """
    cfg = cfg or InversionConfig()
    unknown = set(metrics) - set(TIME_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if len(times) == 0:
        raise ValueError("empty time grid")
    needs = set()
    for m in metrics:
        needs |= {"mean": {"m1"}, "var": {"m1", "m2"}, "m2": {"m2"}}.get(m, {m})
    raw = {k: ([], []) for k in needs}
    free = {k: [_FreePath(spec, i, x, k, y) for i in range(spec.d)] for k in needs}
    for t in times:
        s, w, w_prev = euler_nodes(t, cfg.terms, cfg.shift)
        per_node = []
        for k, beta in enumerate(s):
            try:
                per_node.append(_beta_domain(spec, x, beta, needs, y))
            except NumericalError as exc:
                raise NumericalError(f"t={t:g}, beta node {k} ({beta:.6g}): {exc}") from None
        for key in needs:
            vals = np.array([np.real(node[key] / beta - np.array([fp.lst(beta) for fp in free[key]]))
                             for node, beta in zip(per_node, s)])
            est = w @ vals
            raw[key][1].append(np.abs(est - w_prev @ vals))
            raw[key][0].append(est + np.array([fp.value(t) for fp in free[key]]))
    arr = {k: (np.array(v[0]), np.array(v[1])) for k, v in raw.items()}
    out = {}
    for m in metrics:
        if m == "mean":
            val, err = arr["m1"]
        elif m == "var":
            m1, e1 = arr["m1"]
            m2, e2 = arr["m2"]
            val, err = m2 - m1 ** 2, e2 + 2 * np.abs(m1) * e1
        else:
            val, err = arr["m2" if m == "m2" else m]
        bad = (val < -5e-4 - err) if m not in ("mean", "var") else np.zeros_like(val, bool)
        if m.startswith("p_") or m == "cdf":
            bad |= val > 1 + 5e-4 + err
        if np.any(bad):
            cfg.diagnostics.append(f"{m}: inverted probability outside [0, 1] beyond tolerance")
        out[m] = TimeSeries(m, times, val, err)
    return out


def invert_time_metric(spec, metric, x, i, times, cfg=None, y=None):
    """Single metric for initial state ``i`` (0-based, user order).

    Returns
    -------
    list of tuple
        ``(t, value, error)`` rows.
    """
    ts = invert_time_metrics(spec, x, times, (metric,), cfg, y)[metric]
    return [(float(t), float(v), float(e)) for t, v, e in zip(ts.times, ts.values[:, i], ts.errors[:, i])]
