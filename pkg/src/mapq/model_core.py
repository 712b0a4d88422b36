"""Model description of a finite-buffer queue with Markov additive input.

A background Markov chain ``J`` on ``d`` states with generator ``Q`` selects
which spectrally positive Levy process drives the input. A transition from
state ``i`` to ``j`` may add a nonnegative jump ``B_ij``. The workload is kept
in ``[0, K]``: it is reflected at 0 and work overflowing ``K`` is lost.

The Laplace exponent of state ``i`` uses the convention

    phi_i(a) = -r_i a + sigma_i^2 a^2 / 2 - lambda_i (1 - B_i(a)),

so that ``E exp(-a Y_i(t)) = exp(t phi_i(a))``. A state is a subordinator
(non-decreasing) exactly when ``sigma_i = 0`` and ``r_i >= 0``. The analytic
engine orders the states so that the non-subordinators come first; public
functions translate back to the order in which the user listed them.
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import special

from .errors import ModelError, NumericalError

ROW_SUM_TOL = 1e-12
WEIGHT_TOL = 1e-12

_KINDS = ("zero", "exp", "erlang", "hyperexp", "deterministic")


@dataclass(frozen=True)
class JumpDistribution:
    """Law of a nonnegative jump.

    Use the constructors :meth:`zero`, :meth:`exponential`, :meth:`erlang`,
    :meth:`hyperexponential` and :meth:`deterministic`. All but the last have
    a rational Laplace-Stieltjes transform and can be used by the analytic
    engine; deterministic jumps are accepted by the simulator only.
    """

    kind: str = "zero"
    weights: tuple = ()
    rates: tuple = ()
    shape: int = 1
    value: float = 0.0

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def exponential(cls, rate):
        return cls("exp", (1.0,), (float(rate),), 1)

    @classmethod
    def erlang(cls, shape, rate):
        return cls("erlang", (1.0,), (float(rate),), int(shape))

    @classmethod
    def hyperexponential(cls, weights, rates):
        return cls("hyperexp", tuple(float(w) for w in weights),
                   tuple(float(r) for r in rates), 1)

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", value=float(value))

    # -- checks -----------------------------------------------------------
    def problems(self):
        """Return a list of invariant violations (empty when valid)."""
        out = []
        if self.kind not in _KINDS:
            return [f"unknown jump type {self.kind!r}"]
        if self.kind == "deterministic":
            if not np.isfinite(self.value) or self.value < 0:
                out.append("deterministic jump must be a finite nonnegative value")
            return out
        if self.kind == "zero":
            return out
        if len(self.rates) == 0 or len(self.rates) != len(self.weights):
            out.append("weights and rates must have equal nonzero length")
            return out
        if any(not np.isfinite(r) or r <= 0 for r in self.rates):
            out.append("negative or zero jump rate")
        if any(w < 0 for w in self.weights):
            out.append("negative hyperexponential weight")
        if abs(sum(self.weights) - 1.0) > WEIGHT_TOL:
            out.append("hyperexponential weights must sum to 1")
        if self.kind == "erlang" and self.shape < 1:
            out.append("Erlang shape must be a positive integer")
        return out

    @property
    def is_zero(self):
        return self.kind == "zero" or (self.kind == "deterministic" and self.value == 0)

    @property
    def is_rational(self):
        return self.kind != "deterministic"

    @property
    def is_exp_mixture(self):
        """True for exponential and hyperexponential laws."""
        return self.kind in ("exp", "hyperexp")

    # -- transforms -------------------------------------------------------
    def _check_pole(self, alpha):
        for rate in self.rates:
            if np.any(np.abs(np.asarray(alpha) + rate) < 1e-14 * (1 + rate)):
                raise NumericalError(f"exponent pole: alpha=-{rate} is a pole of the jump LST")

    def lst(self, alpha):
        """Laplace-Stieltjes transform ``E exp(-alpha B)``."""
        alpha = np.asarray(alpha, dtype=complex)
        if self.kind == "zero":
            return np.ones_like(alpha)
        if self.kind == "deterministic":
            return np.exp(-alpha * self.value)
        self._check_pole(alpha)
        if self.kind == "erlang":
            mu = self.rates[0]
            return (mu / (mu + alpha)) ** self.shape
        return sum(w * mu / (mu + alpha) for w, mu in zip(self.weights, self.rates))

    def lst_derivative(self, alpha):
        """Derivative of :meth:`lst` with respect to ``alpha``."""
        alpha = np.asarray(alpha, dtype=complex)
        if self.kind == "zero":
            return np.zeros_like(alpha)
        if self.kind == "deterministic":
            return -self.value * np.exp(-alpha * self.value)
        self._check_pole(alpha)
        if self.kind == "erlang":
            mu, k = self.rates[0], self.shape
            return -k * mu ** k / (mu + alpha) ** (k + 1)
        return sum(-w * mu / (mu + alpha) ** 2 for w, mu in zip(self.weights, self.rates))

    def poles(self):
        """Pole structure ``{rate: multiplicity}``; the poles sit at ``-rate``."""
        if self.kind in ("zero", "deterministic"):
            return {}
        if self.kind == "erlang":
            return {self.rates[0]: self.shape}
        out = {}
        for w, mu in zip(self.weights, self.rates):
            if w > 0:
                out[mu] = 1
        return out

    def numerator(self, poles):
        """Ascending coefficients of ``lst(a) * prod (a + rate)^m`` over ``poles``.

        ``poles`` must contain every pole of this law with at least its own
        multiplicity.
        """
        own = self.poles()
        if self.kind == "zero":
            return _pole_poly(poles)
        if self.kind == "erlang":
            mu = self.rates[0]
            rest = dict(poles)
            rest[mu] -= self.shape
            return npoly.polymul([mu ** self.shape], _pole_poly(rest))[0]
        merged = {}
        for w, mu in zip(self.weights, self.rates):
            merged[mu] = merged.get(mu, 0.0) + w
        out = np.zeros(1)
        for mu, w in merged.items():
            if w == 0:
                continue
            rest = dict(poles)
            rest[mu] -= own[mu]
            out = npoly.polyadd(out, npoly.polymul([w * mu], _pole_poly(rest)))
        return out

    def exp_mixture(self):
        """Return ``(weights, rates)`` of an exponential mixture law."""
        if not self.is_exp_mixture:
            raise ValueError("not an exponential mixture")
        return np.asarray(self.weights, float), np.asarray(self.rates, float)

    # -- distribution -----------------------------------------------------
    def mean(self):
        if self.kind == "zero":
            return 0.0
        if self.kind == "deterministic":
            return self.value
        if self.kind == "erlang":
            return self.shape / self.rates[0]
        return float(sum(w / mu for w, mu in zip(self.weights, self.rates)))

    def sf(self, y):
        """Survival function ``P(B > y)``."""
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return (y < 0).astype(float)
        if self.kind == "deterministic":
            return (y < self.value).astype(float)
        yy = np.maximum(y, 0.0)
        if self.kind == "erlang":
            out = special.gammaincc(self.shape, self.rates[0] * yy)
        else:
            out = sum(w * np.exp(-mu * yy) for w, mu in zip(self.weights, self.rates))
        return np.where(y < 0, 1.0, out)

    def cdf(self, y):
        return 1.0 - self.sf(y)

    def pdf(self, y):
        """Density on ``(0, inf)`` of the absolutely continuous laws."""
        y = np.asarray(y, dtype=float)
        if self.kind in ("zero", "deterministic"):
            raise ValueError("law has no density")
        yy = np.maximum(y, 0.0)
        if self.kind == "erlang":
            mu, k = self.rates[0], self.shape
            out = mu ** k * yy ** (k - 1) * np.exp(-mu * yy) / special.factorial(k - 1)
        else:
            out = sum(w * mu * np.exp(-mu * yy) for w, mu in zip(self.weights, self.rates))
        return np.where(y < 0, 0.0, out)

    def sample(self, rng, n):
        """Draw ``n`` independent jumps with the generator ``rng``."""
        if self.kind == "zero":
            return np.zeros(n)
        if self.kind == "deterministic":
            return np.full(n, self.value)
        if self.kind == "erlang":
            return rng.gamma(self.shape, 1.0 / self.rates[0], size=n)
        if len(self.rates) == 1:
            return rng.exponential(1.0 / self.rates[0], size=n)
        comp = rng.choice(len(self.rates), size=n, p=np.asarray(self.weights) / sum(self.weights))
        return rng.exponential(1.0, size=n) / np.asarray(self.rates)[comp]

    # -- serialization ----------------------------------------------------
    def to_dict(self):
        if self.kind == "zero":
            return {"type": "zero"}
        if self.kind == "exp":
            return {"type": "exp", "rate": self.rates[0]}
        if self.kind == "erlang":
            return {"type": "erlang", "shape": self.shape, "rate": self.rates[0]}
        if self.kind == "hyperexp":
            return {"type": "hyperexp", "weights": list(self.weights), "rates": list(self.rates)}
        return {"type": "deterministic", "value": self.value}

    @classmethod
    def from_dict(cls, data):
        kind = data.get("type")
        try:
            if kind == "zero":
                return cls.zero()
            if kind == "exp":
                return cls.exponential(data["rate"])
            if kind == "erlang":
                return cls.erlang(data["shape"], data["rate"])
            if kind == "hyperexp":
                return cls.hyperexponential(data["weights"], data["rates"])
            if kind == "deterministic":
                return cls.deterministic(data["value"])
        except KeyError as exc:
            raise ModelError(f"jump_dist of type {kind!r} lacks field {exc.args[0]!r}") from None
        raise ModelError(f"unknown jump_dist type {kind!r}")


def _pole_poly(poles):
    """Ascending coefficients of ``prod (a + rate)^m``."""
    out = np.ones(1)
    for rate, m in poles.items():
        for _ in range(m):
            out = npoly.polymul(out, [rate, 1.0])
    return out


def _merge_poles(*dicts):
    out = {}
    for dct in dicts:
        for rate, m in dct.items():
            out[rate] = max(out.get(rate, 0), m)
    return out


@dataclass(frozen=True)
class LevyComponent:
    """Spectrally positive Levy process attached to one background state.

    Parameters
    ----------
    drift : float
        Linear drift ``r`` (negative values drain the buffer).
    sigma : float
        Brownian coefficient ``sigma >= 0``.
    jump_rate : float
        Poisson rate ``lambda >= 0`` of upward jumps.
    jump_dist : JumpDistribution
        Law of the jumps; must be zero when ``jump_rate == 0``.
    label : str
        Name used in reports.
    """

    drift: float = 0.0
    sigma: float = 0.0
    jump_rate: float = 0.0
    jump_dist: JumpDistribution = field(default_factory=JumpDistribution.zero)
    label: str = ""

    @property
    def is_subordinator(self):
        return self.sigma == 0 and self.drift >= 0

    @property
    def is_flat(self):
        """Zero drift and no Brownian part: the path stays put between jumps."""
        return self.sigma == 0 and self.drift == 0

    def problems(self):
        out = []
        if not np.isfinite(self.drift):
            out.append("drift must be finite")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            out.append("negative sigma")
        if not np.isfinite(self.jump_rate) or self.jump_rate < 0:
            out.append("negative jump rate")
        if self.jump_rate == 0 and not self.jump_dist.is_zero:
            out.append("jump_rate is 0 but jump_dist is not zero")
        if self.jump_rate > 0 and self.jump_dist.is_zero:
            out.append("jump_rate > 0 requires a nonzero jump_dist")
        out.extend(self.jump_dist.problems())
        return out

    def exponent(self, alpha):
        """Laplace exponent ``phi(alpha)``."""
        alpha = np.asarray(alpha, dtype=complex)
        out = -self.drift * alpha + 0.5 * self.sigma ** 2 * alpha ** 2
        if self.jump_rate > 0:
            out = out - self.jump_rate * (1.0 - self.jump_dist.lst(alpha))
        return out

    def exponent_derivative(self, alpha):
        alpha = np.asarray(alpha, dtype=complex)
        out = -self.drift + self.sigma ** 2 * alpha
        if self.jump_rate > 0:
            out = out + self.jump_rate * self.jump_dist.lst_derivative(alpha)
        return out

    def poles(self):
        return self.jump_dist.poles() if self.jump_rate > 0 else {}

    def exponent_numerator(self, poles=None):
        """Ascending coefficients of ``phi(a) * prod (a + rate)^m``."""
        poles = self.poles() if poles is None else poles
        den = _pole_poly(poles)
        base = npoly.polymul([-self.jump_rate, -self.drift, 0.5 * self.sigma ** 2], den)
        if self.jump_rate > 0:
            base = npoly.polyadd(base, self.jump_rate * self.jump_dist.numerator(poles))
        return base

    def to_dict(self):
        return {"label": self.label, "drift": self.drift, "sigma": self.sigma,
                "jump_rate": self.jump_rate, "jump_dist": self.jump_dist.to_dict()}


def laplace_exponent(component, alpha):
    """Laplace exponent ``phi(alpha)`` of a Levy component.

    Examples
    --------
    >>> bm = LevyComponent(drift=-1.0, sigma=1.0)
    >>> complex(laplace_exponent(bm, 2.0)).real
    4.0
    """
    return component.exponent(alpha)


@dataclass(frozen=True)
class ModelSpec:
    """Complete queue description.

    Parameters
    ----------
    Q : tuple of tuple of float
        Generator of the background chain.
    components : tuple of LevyComponent
        One Levy component per background state.
    capacity : float
        Buffer size ``K``.
    transition_jumps : tuple of tuple of JumpDistribution
        ``B_ij``; the diagonal must be zero.
    """

    Q: tuple
    components: tuple
    capacity: float
    transition_jumps: tuple = None

    @classmethod
    def create(cls, Q, components, capacity, transition_jumps=None):
        Q = np.asarray(Q, dtype=float)
        d = Q.shape[0]
        if transition_jumps is None:
            transition_jumps = [[JumpDistribution.zero()] * d for _ in range(d)]
        elif isinstance(transition_jumps, dict):
            tj = [[JumpDistribution.zero()] * d for _ in range(d)]
            for (i, j), dist in transition_jumps.items():
                tj[i][j] = dist
            transition_jumps = tj
        comps = []
        for k, c in enumerate(components):
            if not c.label:
                c = LevyComponent(c.drift, c.sigma, c.jump_rate, c.jump_dist, str(k + 1))
            comps.append(c)
        return cls(tuple(tuple(float(v) for v in row) for row in Q), tuple(comps),
                   float(capacity), tuple(tuple(row) for row in transition_jumps))

    @property
    def d(self):
        return len(self.components)

    @cached_property
    def Q_array(self):
        return np.asarray(self.Q, dtype=float)

    @property
    def q(self):
        """Total exit rates ``q_i = -Q_ii``."""
        return -np.diag(self.Q_array)

    @property
    def labels(self):
        return [c.label for c in self.components]

    @cached_property
    def subordinator_mask(self):
        return np.array([c.is_subordinator for c in self.components])

    @property
    def d_minus(self):
        return int(np.sum(~self.subordinator_mask))

    @property
    def is_ordered(self):
        mask = self.subordinator_mask
        return not np.any(mask[:-1] & ~mask[1:])

    @property
    def is_rational(self):
        return all(c.jump_dist.is_rational for c in self.components) and all(
            b.is_rational for row in self.transition_jumps for b in row)

    def state_index(self, label):
        """Index of a state given its label or (1-based) number."""
        labels = self.labels
        if label in labels:
            return labels.index(label)
        try:
            k = int(label)
        except (TypeError, ValueError):
            raise ModelError(f"unknown state {label!r}") from None
        if 1 <= k <= self.d:
            return k - 1
        raise ModelError(f"state index {label!r} out of range")

    def problems(self):
        """List every invariant violation, each tagged with its location."""
        out = []
        Q = np.asarray(self.Q, dtype=float)
        d = len(self.components)
        if Q.ndim != 2 or Q.shape != (d, d):
            return [f"Q must be {d}x{d}"]
        if not np.isfinite(self.capacity) or self.capacity <= 0:
            out.append("capacity K must be positive")
        for i in range(d):
            for j in range(d):
                if i != j and Q[i, j] < 0:
                    out.append(f"negative rate Q[{i}][{j}]={Q[i, j]}")
            if abs(Q[i].sum()) > ROW_SUM_TOL * max(1.0, np.abs(Q[i]).max()):
                out.append(f"row-sum of Q row {i} is {Q[i].sum():.3g}, not 0")
        for i, comp in enumerate(self.components):
            out.extend(f"state {i}: {msg}" for msg in comp.problems())
        tj = self.transition_jumps
        if tj is None or len(tj) != d or any(len(row) != d for row in tj):
            out.append(f"transition_jumps must be {d}x{d}")
            return out
        for i in range(d):
            if not tj[i][i].is_zero:
                out.append(f"diagonal transition jump B[{i}][{i}] must be zero")
            for j in range(d):
                out.extend(f"transition jump B[{i}][{j}]: {m}" for m in tj[i][j].problems())
        return out

    def permuted(self, perm):
        """Spec with states listed in the order ``perm`` (new k = old perm[k])."""
        perm = list(perm)
        Q = self.Q_array[np.ix_(perm, perm)]
        comps = [self.components[p] for p in perm]
        tj = [[self.transition_jumps[a][b] for b in perm] for a in perm]
        return ModelSpec.create(Q, comps, self.capacity, tj)

    @cached_property
    def ordering(self):
        """``(ordered_spec, perm)`` with non-subordinators first."""
        return validate(self)

    def to_dict(self):
        d = self.d
        jumps = []
        for i in range(d):
            for j in range(d):
                if i != j and not self.transition_jumps[i][j].is_zero:
                    jumps.append({"from": i, "to": j,
                                  "dist": self.transition_jumps[i][j].to_dict()})
        return {"states": [c.to_dict() for c in self.components],
                "Q": [list(row) for row in self.Q],
                "transition_jumps": jumps,
                "capacity": self.capacity}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def model_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def validate(spec):
    """Check a model and order its states.

    Parameters
    ----------
    spec : ModelSpec

    Returns
    -------
    ordered : ModelSpec
        The same model with the non-subordinator states first.
    perm : ndarray of int
        ``ordered`` state ``k`` is state ``perm[k]`` of ``spec``.

    Raises
    ------
    ModelError
        Listing every violated invariant.
    """
    problems = spec.problems()
    if problems:
        raise ModelError(problems)
    mask = spec.subordinator_mask
    perm = np.concatenate([np.flatnonzero(~mask), np.flatnonzero(mask)])
    if np.array_equal(perm, np.arange(spec.d)):
        return spec, perm
    return spec.permuted(perm), perm


def to_user_order(matrix, perm):
    """Map a matrix indexed in ordered states back to the user's order."""
    inv = np.argsort(perm)
    matrix = np.asarray(matrix)
    if matrix.ndim == 1:
        return matrix[inv]
    return matrix[np.ix_(inv, inv)]


def build_F(spec, alpha):
    """Matrix exponent ``F(alpha)`` with entries ``q_ij B_ij(alpha) + phi_i(alpha) 1{i=j}``.

    Parameters
    ----------
    spec : ModelSpec
    alpha : complex

    Returns
    -------
    ndarray, shape (d, d), complex
    """
    Q = spec.Q_array
    d = spec.d
    F = np.array(Q, dtype=complex)
    for i in range(d):
        F[i, i] += spec.components[i].exponent(alpha)
        for j in range(d):
            if i != j and Q[i, j] > 0 and not spec.transition_jumps[i][j].is_zero:
                F[i, j] = Q[i, j] * spec.transition_jumps[i][j].lst(alpha)
    return F


def build_F_prime(spec, alpha):
    """Entrywise derivative of :func:`build_F` in ``alpha``."""
    Q = spec.Q_array
    d = spec.d
    out = np.zeros((d, d), dtype=complex)
    for i in range(d):
        out[i, i] = spec.components[i].exponent_derivative(alpha)
        for j in range(d):
            if i != j and Q[i, j] > 0:
                out[i, j] = Q[i, j] * spec.transition_jumps[i][j].lst_derivative(alpha)
    return out


def build_Phi(spec, alpha, beta):
    """Transform of the free process, ``beta (beta I - F(alpha))^{-1}``.

    Entry ``(i, j)`` equals ``E_i[exp(-alpha Y(T)) 1{J(T) = j}]`` with ``T``
    exponential of rate ``beta``.
    """
    M = beta * np.eye(spec.d) - build_F(spec, alpha)
    try:
        out = beta * np.linalg.inv(M)
    except np.linalg.LinAlgError:
        raise NumericalError("Phi singular: beta is an eigenvalue of F(alpha)") from None
    if not np.all(np.isfinite(out)) or np.linalg.cond(M) > 1e14:
        raise NumericalError("Phi singular: beta is an eigenvalue of F(alpha)")
    return out


# -- polynomial form of det(F(a) - beta I) ------------------------------------

def row_poles(spec):
    """Least common pole structure of each row of ``F``."""
    out = []
    Q = spec.Q_array
    for i in range(spec.d):
        dicts = [spec.components[i].poles()]
        for j in range(spec.d):
            if i != j and Q[i, j] > 0:
                dicts.append(spec.transition_jumps[i][j].poles())
        out.append(_merge_poles(*dicts))
    return out


def cleared_rows(spec, beta):
    """Polynomial entries of ``diag(D_i) (F(a) - beta I)``.

    ``D_i`` clears every denominator appearing in row ``i``. Returns a nested
    list of ascending coefficient arrays.
    """
    Q = spec.Q_array
    d = spec.d
    rows = []
    for i, poles in enumerate(row_poles(spec)):
        den = _pole_poly(poles)
        row = []
        for j in range(d):
            if i == j:
                entry = npoly.polyadd(spec.components[i].exponent_numerator(poles),
                                      (Q[i, i] - beta) * den)
            elif Q[i, j] > 0:
                entry = Q[i, j] * spec.transition_jumps[i][j].numerator(poles)
            else:
                entry = np.zeros(1)
            row.append(np.asarray(entry, dtype=complex))
        rows.append(row)
    return rows


def poly_det(rows):
    """Determinant of a small matrix of polynomials by cofactor expansion."""
    d = len(rows)
    if d == 1:
        return rows[0][0]
    out = np.zeros(1, dtype=complex)
    for j in range(d):
        if not np.any(rows[0][j]):
            continue
        minor = [[rows[i][k] for k in range(d) if k != j] for i in range(1, d)]
        term = npoly.polymul(rows[0][j], poly_det(minor))
        out = npoly.polyadd(out, term if j % 2 == 0 else -term)
    return out


def det_polynomial(spec, beta):
    """Ascending coefficients of the cleared determinant polynomial in ``a``."""
    coef = np.asarray(poly_det(cleared_rows(spec, beta)), dtype=complex)
    scale = np.max(np.abs(coef))
    nz = np.flatnonzero(np.abs(coef) > 1e-14 * scale)
    return coef[: nz[-1] + 1]


def lst_poles(spec):
    """Set of all poles (as positive rates) of the model's transforms."""
    out = set()
    for p in row_poles(spec):
        out.update(p)
    return sorted(out)


# -- configuration files ------------------------------------------------------

def model_from_dict(data):
    """Build a :class:`ModelSpec` from the documented JSON structure."""
    if not isinstance(data, dict):
        raise ModelError("model file must contain a JSON object")
    missing = [k for k in ("states", "Q", "capacity") if k not in data]
    if missing:
        raise ModelError([f"missing top-level key {k!r}" for k in missing])
    comps = []
    for k, st in enumerate(data["states"]):
        try:
            dist = JumpDistribution.from_dict(st.get("jump_dist", {"type": "zero"}))
            comps.append(LevyComponent(float(st.get("drift", 0.0)), float(st.get("sigma", 0.0)),
                                       float(st.get("jump_rate", 0.0)), dist,
                                       str(st.get("label", k + 1))))
        except (TypeError, ValueError, AttributeError) as exc:
            raise ModelError(f"states[{k}]: {exc}") from None
    d = len(comps)
    tj = [[JumpDistribution.zero()] * d for _ in range(d)]
    for n, item in enumerate(data.get("transition_jumps", [])):
        try:
            i, j = int(item["from"]), int(item["to"])
            tj[i][j] = JumpDistribution.from_dict(item["dist"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ModelError(f"transition_jumps[{n}]: bad entry ({exc})") from None
    try:
        Q = np.asarray(data["Q"], dtype=float)
    except (TypeError, ValueError):
        raise ModelError("Q must be a numeric matrix") from None
    if Q.shape != (d, d):
        raise ModelError(f"Q must be {d}x{d}, got shape {Q.shape}")
    spec = ModelSpec.create(Q, comps, float(data["capacity"]), tj)
    validate(spec)
    return spec


def load_model(path):
    """Read and validate a model file. JSON syntax errors report line numbers."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_dict(data)
