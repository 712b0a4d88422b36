"""Monte Carlo simulation of the buffered and the free Markov additive process.

Paths are advanced in vectorized batches. Between background events
(transitions and upward jumps, both at exponential epochs) a state moves
either linearly (no Brownian part, simulated exactly) or as a Brownian motion
with drift, sampled on a grid of step at most ``dt``. Steps never straddle an
event or an observation time, so only the diffusive motion is discretized.

Reflection of a Brownian step at a boundary uses the exact joint law of the
endpoint and the running extremum of a Brownian bridge, which removes the
``O(sqrt(dt))`` bias of plain clipping. Barrier crossings of the free process
use the matching bridge crossing probability.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

CHUNK = 100_000


@dataclass
class SimConfig:
    """Simulation settings.

    Parameters
    ----------
    paths : int
    dt : float
        Largest step for states with a Brownian part.
    seed : int
    beta : float, optional
        When set, every path is observed once at an independent exponential
        time of this rate instead of on a time grid.
    antithetic : bool
        Pair each Brownian increment with its negative (Brownian states only).
    """

    paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    beta: float = None
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class SimEstimate:
    """Monte Carlo means with standard errors, one entry per metric.

    ``values[name]`` and ``errors[name]`` are arrays indexed by the
    observation times (or of length one under exponential killing).
    """

    values: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    paths: int = 0
    times: np.ndarray = None

    def __getitem__(self, name):
        return self.values[name], self.errors[name]


class _Dynamics:
    """Per-state parameters in array form plus event sampling."""

    def __init__(self, spec):
        self.spec = spec
        c = spec.components
        self.d = spec.d
        self.r = np.array([x.drift for x in c])
        self.sig = np.array([x.sigma for x in c])
        self.lam = np.array([x.jump_rate for x in c])
        self.q = spec.q
        self.rate = self.lam + self.q
        Q = spec.Q_array.copy()
        np.fill_diagonal(Q, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            P = np.where(self.q[:, None] > 0, Q / self.q[:, None], 0.0)
        self.cum = np.cumsum(P, axis=1)
        self.brownian = bool(np.any(self.sig > 0))

    def next_event(self, rng, J):
        rate = self.rate[J]
        with np.errstate(divide="ignore"):
            return np.where(rate > 0, rng.exponential(1.0, len(J)) / np.where(rate > 0, rate, 1.0), np.inf)

    def event(self, rng, J):
        """Sample the outcome of an event: upward displacement and new state."""
        n = len(J)
        u = rng.random(n)
        is_jump = u * self.rate[J] < self.lam[J]
        size = np.zeros(n)
        newJ = J.copy()
        for s in range(self.d):
            m = is_jump & (J == s)
            if np.any(m):
                size[m] = self.spec.components[s].jump_dist.sample(rng, int(m.sum()))
        tr = ~is_jump
        if np.any(tr):
            u2 = rng.random(int(tr.sum()))
            dest = np.sum(u2[:, None] >= self.cum[J[tr]], axis=1)
            dest = np.minimum(dest, self.d - 1)
            newJ[tr] = dest
            idx = np.flatnonzero(tr)
            for s in range(self.d):
                for k in range(self.d):
                    dist = self.spec.transition_jumps[s][k]
                    if dist.is_zero:
                        continue
                    m = (J[idx] == s) & (dest == k)
                    if np.any(m):
                        size[idx[m]] = dist.sample(rng, int(m.sum()))
        return size, newJ


def _rng(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def _gauss(rng, n, antithetic):
    if not antithetic:
        return rng.standard_normal(n)
    half = rng.standard_normal((n + 1) // 2)
    return np.concatenate([half, -half])[:n]


class _Reflected:
    """State of a batch of buffered paths."""

    def __init__(self, dyn, x, i, n, K, rng, dt, antithetic):
        self.dyn, self.K, self.rng, self.dt, self.anti = dyn, K, rng, dt, antithetic
        self.t = np.zeros(n)
        self.V = np.full(n, float(x))
        self.J = np.full(n, int(i))
        self.Y = np.zeros(n)
        self.Um = np.zeros(n)
        self.Up = np.zeros(n)
        self.idle = np.zeros(n)
        self.x0 = float(x)
        self.te = dyn.next_event(rng, self.J)

    def advance(self, target):
        """Move every path to its own time ``target``."""
        dyn, K = self.dyn, self.K
        while True:
            act = np.flatnonzero(self.t < target)
            if len(act) == 0:
                break
            J = self.J[act]
            sig = dyn.sig[J]
            h_ev = self.te[act] - self.t[act]
            h_tg = target[act] - self.t[act]
            h = np.minimum(h_ev, h_tg)
            diff = sig > 0
            h = np.where(diff, np.minimum(h, self.dt), h)
            self._flow(act, J, h, diff)
            hit_ev = h == h_ev
            self.t[act] = np.where(hit_ev, self.te[act], np.where(h == h_tg, target[act], self.t[act] + h))
            ev = act[hit_ev]
            if len(ev):
                size, newJ = dyn.event(self.rng, self.J[ev])
                raw = self.V[ev] + size
                over = np.maximum(raw - K, 0.0)
                self.Y[ev] += size
                self.Up[ev] += over
                self.V[ev] = raw - over
                self.J[ev] = newJ
                self.te[ev] = self.t[ev] + dyn.next_event(self.rng, newJ)
                if not dyn.brownian:
                    err = np.abs(self.x0 + self.Y[ev] + self.Um[ev] - self.Up[ev] - self.V[ev])
                    if np.any(err > 1e-9 * (1 + np.abs(self.Y[ev]) + self.Um[ev] + self.Up[ev])):
                        raise AssertionError("path conservation violated")

    def _flow(self, act, J, h, diff):
        dyn, K = self.dyn, self.K
        lin = act[~diff]
        if len(lin):
            r = dyn.r[J[~diff]]
            hl = h[~diff]
            V0 = self.V[lin]
            free = V0 + r * hl
            down = np.maximum(-free, 0.0)
            up = np.maximum(free - K, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                t_zero = np.where(r < 0, V0 / np.where(r < 0, -r, 1.0), np.inf)
            at_zero = np.where(r < 0, np.maximum(hl - t_zero, 0.0), np.where((r == 0) & (V0 == 0), hl, 0.0))
            self.Y[lin] += r * hl
            self.Um[lin] += down
            self.Up[lin] += up
            self.V[lin] = free + down - up
            self.idle[lin] += at_zero
        bro = act[diff]
        if len(bro):
            Jb = J[diff]
            hb = h[diff]
            s = self.dyn.sig[Jb]
            X = self.dyn.r[Jb] * hb + s * np.sqrt(hb) * _gauss(self.rng, len(bro), self.anti)
            root = np.sqrt(X ** 2 - 2.0 * s ** 2 * hb * np.log(self.rng.random(len(bro))))
            V0 = self.V[bro]
            lower = V0 < K / 2
            low = 0.5 * (X - root)
            high = 0.5 * (X + root)
            push_up = np.where(lower, np.maximum(-(V0 + low), 0.0), 0.0)
            push_down = np.where(lower, 0.0, np.maximum(V0 + high - K, 0.0))
            V1 = V0 + X + push_up - push_down
            self.Y[bro] += X
            self.Um[bro] += push_up
            self.Up[bro] += push_down
            self.V[bro] = np.clip(V1, 0.0, K)


class _Accumulator:
    """Streaming sums of per-path functions."""

    def __init__(self):
        self.s1 = {}
        self.s2 = {}
        self.n = 0

    def add(self, name, vals):
        vals = np.asarray(vals, dtype=complex if np.iscomplexobj(vals) else float)
        self.s1[name] = self.s1.get(name, 0) + vals.sum(axis=-1)
        self.s2[name] = self.s2.get(name, 0) + (np.abs(vals) ** 2).sum(axis=-1)

    def mean(self, name):
        return self.s1[name] / self.n

    def se(self, name):
        m = self.mean(name)
        var = np.maximum(self.s2[name] / self.n - np.abs(m) ** 2, 0.0)
        return np.sqrt(var * self.n / max(self.n - 1, 1) / self.n)


STANDARD_METRICS = ("mean", "var", "m2", "p_empty", "p_full", "idle", "lost")


def _check(spec, cfg):
    if np.any(spec.Q_array.diagonal() > 0):
        raise ModelError("bad generator")
    if any(c.sigma > 0 for c in spec.components) and cfg.dt > 1e-2:
        raise ModelError("dt too coarse: Brownian states need dt <= 1e-2")


def simulate(spec, x, i, config, metrics=("mean", "var", "p_empty", "p_full"), times=(1.0,),
             functions=None):
    """Simulate the buffered workload from ``V(0) = x``, ``J(0) = i``.

    Parameters
    ----------
    spec : ModelSpec
    x : float
    i : int
        Initial state (0-based, user order).
    config : SimConfig
    metrics : sequence of str
        Any of ``mean``, ``var``, ``m2``, ``p_empty``, ``p_full``, ``idle``,
        ``lost`` (cumulative idle time and lost work).
    times : sequence of float
        Observation times; ignored when ``config.beta`` is set.
    functions : dict, optional
        Extra metrics ``name -> f(V, J, idle, lost)`` returning one value per
        path.

    Returns
    -------
    SimEstimate
    """
    _check(spec, config)
    unknown = set(metrics) - set(STANDARD_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    K = spec.capacity
    if not 0 <= x <= K:
        raise ModelError(f"initial workload {x} outside [0, {K}]")
    dyn = _Dynamics(spec)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if config.beta is None and (np.any(np.diff(times) <= 0) or times[0] < 0):
        raise ValueError("observation times must be increasing and nonnegative")
    functions = dict(functions or {})
    acc = _Accumulator()
    done = 0
    chunk = 0
    while done < config.paths:
        n = min(CHUNK, config.paths - done)
        rng = _rng(config.seed, chunk)
        batch = _Reflected(dyn, x, i, n, K, rng, config.dt, config.antithetic)
        if config.beta is not None:
            targets = [rng.exponential(1.0 / config.beta, n)]
        else:
            targets = [np.full(n, t) for t in times]
        rows = {}
        for tg in targets:
            batch.advance(tg)
            V = batch.V.copy()
            vals = {"V": V, "V2": V ** 2, "V3": V ** 3, "V4": V ** 4,
                    "p_empty": (V <= 0).astype(float), "p_full": (V >= K).astype(float),
                    "idle": batch.idle.copy(), "lost": batch.Up.copy()}
            for name, f in functions.items():
                vals[name] = np.asarray(f(V, batch.J, batch.idle, batch.Up))
            for name, v in vals.items():
                rows.setdefault(name, []).append(v)
        for name, v in rows.items():
            acc.add(name, np.array(v))
        acc.n += n
        done += n
        chunk += 1
    est = SimEstimate(paths=acc.n, times=None if config.beta is not None else times)
    m1, m2 = acc.mean("V"), acc.mean("V2")
    for name in metrics:
        if name == "mean":
            est.values[name], est.errors[name] = m1, acc.se("V")
        elif name == "m2":
            est.values[name], est.errors[name] = m2, acc.se("V2")
        elif name == "var":
            est.values[name] = m2 - m1 ** 2
            est.errors[name] = _var_se(acc)
        else:
            est.values[name], est.errors[name] = acc.mean(name), acc.se(name)
    for name in functions:
        est.values[name], est.errors[name] = acc.mean(name), acc.se(name)
    return est


def _var_se(acc):
    """Delta-method standard error of ``m2 - m1^2``."""
    n = acc.n
    m1, m2, m3, m4 = (acc.mean(k) for k in ("V", "V2", "V3", "V4"))
    var_v = m2 - m1 ** 2
    var_v2 = m4 - m2 ** 2
    cov = m3 - m1 * m2
    g = -2 * m1
    total = g ** 2 * var_v + var_v2 + 2 * g * cov
    return np.sqrt(np.maximum(total, 0.0) / n)


def simulate_free_exit(spec, u_minus, u_plus, beta, config, i=0, alphas=(0.0,)):
    """Race between ``sigma(u_minus)``, ``tau(u_plus)`` and the killing time.

    The free process starts at 0 in state ``i``. Either level may be
    ``np.inf``.

    Returns
    -------
    SimEstimate
        ``delta_minus_j`` and ``delta_plus_j`` (exit probabilities jointly
        with the state ``j``), ``overshoot_j_a`` (``E[e^{-a (Y(tau) - u_plus)};
        tau first, J = j]``) and ``kill_j_a`` (``E[e^{-a (u_minus + Y(T))};
        T first, J = j]``, with ``u_minus`` read as 0 when infinite), for each
        ``a`` in ``alphas``.
    """
    _check(spec, config)
    dyn = _Dynamics(spec)
    acc = _Accumulator()
    d = spec.d
    shift = 0.0 if np.isinf(u_minus) else u_minus
    done = chunk = 0
    while done < config.paths:
        n = min(CHUNK, config.paths - done)
        rng = _rng(config.seed, chunk)
        T = rng.exponential(1.0 / beta, n)
        out, Y, J = _free_race(dyn, rng, n, i, u_minus, u_plus, T, config.dt, config.antithetic)
        for j in range(d):
            inj = J == j
            acc.add(f"delta_minus_{j}", ((out == 1) & inj).astype(float))
            acc.add(f"delta_plus_{j}", ((out == 2) & inj).astype(float))
            for a in alphas:
                ov = np.where((out == 2) & inj, np.exp(-a * (Y - u_plus)) if np.isfinite(u_plus) else 0.0, 0.0)
                acc.add(f"overshoot_{j}_{a:g}", ov)
                acc.add(f"kill_{j}_{a:g}", np.where((out == 0) & inj, np.exp(-a * (shift + Y)), 0.0))
        acc.n += n
        done += n
        chunk += 1
    est = SimEstimate(paths=acc.n)
    for name in acc.s1:
        est.values[name], est.errors[name] = acc.mean(name), acc.se(name)
    return est


def _free_race(dyn, rng, n, i, u_minus, u_plus, T, dt, antithetic):
    """Outcome per path: 0 killed first, 1 down-crossing, 2 up-crossing."""
    t = np.zeros(n)
    Y = np.zeros(n)
    J = np.full(n, int(i))
    out = np.full(n, -1)
    te = dyn.next_event(rng, J)
    lo, hi = -u_minus, u_plus
    while True:
        act = np.flatnonzero(out < 0)
        if len(act) == 0:
            break
        Ja = J[act]
        s = dyn.sig[Ja]
        h_ev = te[act] - t[act]
        h_kill = T[act] - t[act]
        h = np.minimum(h_ev, h_kill)
        diff = s > 0
        h = np.where(diff, np.minimum(h, dt), h)
        r = dyn.r[Ja]
        Y0 = Y[act]
        if np.any(diff):
            X = r * h + s * np.sqrt(h) * _gauss(rng, len(act), antithetic)
            X = np.where(diff, X, r * h)
        else:
            X = r * h
        Y1 = Y0 + X
        crossed_lo = Y1 <= lo
        crossed_hi = Y1 > hi
        if np.any(diff):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                var = np.where(diff, s ** 2 * h, 1.0)
                p_lo = np.exp(-2.0 * (Y0 - lo) * (Y1 - lo) / var)
                p_hi = np.exp(-2.0 * (hi - Y0) * (hi - Y1) / var)
            u = rng.random(len(act))
            prefer_lo = (Y0 - lo) < (hi - Y0)
            bridge_lo = diff & ~crossed_lo & ~crossed_hi & (u < np.where(prefer_lo, p_lo, 0.0))
            bridge_hi = diff & ~crossed_lo & ~crossed_hi & ~bridge_lo & (u < np.where(prefer_lo, 0.0, p_hi))
            crossed_lo |= bridge_lo
            crossed_hi |= bridge_hi
        Y[act] = np.where(crossed_lo, lo, np.where(crossed_hi, hi, Y1))
        done_lo = act[crossed_lo]
        done_hi = act[crossed_hi & ~crossed_lo]
        out[done_lo] = 1
        out[done_hi] = 2
        rest = ~(crossed_lo | crossed_hi)
        t_new = np.where(h == h_ev, te[act], np.where(h == h_kill, T[act], t[act] + h))
        t[act] = t_new
        killed = act[rest & (h == h_kill) & (h < h_ev)]
        out[killed] = 0
        ev = act[rest & (h == h_ev)]
        if len(ev):
            size, newJ = dyn.event(rng, J[ev])
            Y[ev] += size
            J[ev] = newJ
            te[ev] = t[ev] + dyn.next_event(rng, newJ)
            over = Y[ev] > hi
            out[ev[over]] = 2
    return out, Y, J
