"""Laplace exponents of the free process, their inverses, and exact input paths.

For station ``i`` the free process is X_i = sum_j A_ij J_j - r_i t with
``A = (I - P')^{-1}``.  Its exponent psi_i(b) = log E exp(-b X_i(1)) is

    psi_i(b) = lin * b + quad * b**2 - sum_j lam_j (1 - Fhat_j(A_ij b))

with ``lin = r_i - sum_j A_ij d_j`` and ``quad = sum_j A_ij**2 sigma_j**2 / 2``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import LevyComponentSpec, PreconditionError, TreeNetworkSpec, derive_tandem

DEFAULT_DELTA = 1e-3


class LaplaceExponent:
    """Closed-form psi, psi', Phi, Phi' for one spectrally positive component.

    Parameters
    ----------
    lin : float
        Coefficient of b (drain minus drift).
    quad : float
        Coefficient of b**2 (half the Brownian variance).
    jumps : list of (intensity, law, scale)
        Each term contributes ``-intensity * (1 - law.laplace(scale * b))``.
    index : int, optional
        Station this exponent belongs to (bookkeeping only).
    """

    def __init__(self, lin, quad=0.0, jumps=(), index=None):
        self.lin = float(lin)
        self.quad = float(quad)
        self.jumps = tuple((float(lam), law, float(s)) for lam, law, s in jumps if lam > 0 and s > 0)
        self.index = index
        if self.quad < 0:
            raise ValueError("quadratic coefficient must be nonnegative")

    @classmethod
    def compound_poisson(cls, c, intensity, law):
        """psi(b) = c b - lam (1 - Fhat(b)), the single-input exponent."""
        return cls(c, 0.0, [(intensity, law, 1.0)])

    def __repr__(self):
        return f"LaplaceExponent(index={self.index}, lin={self.lin}, quad={self.quad}, jumps={len(self.jumps)})"

    # -- exponent ---------------------------------------------------------
    def _psi(self, b):
        b = np.asarray(b, dtype=float)
        out = self.lin * b + self.quad * b * b
        for lam, law, s in self.jumps:
            out = out - lam * law.laplace_tail(s * b)
        return out

    def psi(self, b):
        b = np.asarray(b, dtype=float)
        if np.any(b < 0):
            raise ValueError(f"psi needs b >= 0, got {b}")
        out = self._psi(b)
        return float(out) if out.ndim == 0 else out

    def dpsi(self, b):
        b = np.asarray(b, dtype=float)
        out = self.lin + 2.0 * self.quad * b
        for lam, law, s in self.jumps:
            out = out - lam * s * law.laplace_weighted(s * b)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def mean(self) -> float:
        """E X(1) = -psi'(0)."""
        return -float(self.dpsi(0.0))

    @property
    def delta(self) -> float:
        """lim psi(b)/b as b -> inf; infinite with a Brownian part."""
        return np.inf if self.quad > 0 else self.lin

    @property
    def prob_zero_max(self) -> float:
        """P(sup X = 0) = -E X(1) / delta (0 with a Brownian part)."""
        self._require_drift()
        return -self.mean / self.delta if np.isfinite(self.delta) else 0.0

    def _require_drift(self):
        if not self.mean < 0:
            raise PreconditionError(
                f"Assumption D violated: E X(1) = {self.mean} is not negative (component {self.index})"
            )

    # -- inverse ----------------------------------------------------------
    def _phi_scalar(self, q: float) -> float:
        if q == 0.0:
            return 0.0
        if np.isinf(q):
            return np.inf
        hi = 1.0
        while self._psi(hi) < q:
            hi *= 2.0
            if hi > 1e300:
                raise FloatingPointError("could not bracket Phi")
        lo = 0.0 if hi == 1.0 else hi / 2.0
        root = brentq(lambda b: float(self._psi(b)) - q, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
        # Newton polish; keep the better of the two iterates
        res = float(self._psi(root)) - q
        for _ in range(2):
            cand = root - res / float(self.dpsi(root))
            cres = float(self._psi(cand)) - q
            if cand >= 0 and abs(cres) < abs(res):
                root, res = cand, cres
            else:
                break
        return float(root)

    def phi(self, q):
        """Right inverse of psi on [0, inf); Phi(0) = 0 exactly."""
        self._require_drift()
        q = np.asarray(q, dtype=float)
        if np.any(q < 0):
            raise ValueError(f"phi needs q >= 0, got {q}")
        if q.ndim == 0:
            return self._phi_scalar(float(q))
        return np.array([self._phi_scalar(float(v)) for v in q.ravel()]).reshape(q.shape)

    def dphi(self, q):
        """Phi'(q) = 1 / psi'(Phi(q))."""
        return 1.0 / np.asarray(self.dpsi(self.phi(q)))

    # -- tail -------------------------------------------------------------
    def adjustment_coefficient(self) -> float:
        """R > 0 with E exp(R X(1)) = 1, i.e. psi(-R) = 0.

        Used only to size simulation horizons: P(sup_{s>=0} X(s) > x) <= exp(-R x).
        """
        self._require_drift()
        if not self.jumps:
            return 2.0 * self.lin / (2.0 * self.quad) if self.quad > 0 else np.inf
        cap = min(law.abscissa / s for _, law, s in self.jumps)
        f = lambda R: float(self._psi(-R))
        hi = 1.0 if not np.isfinite(cap) else cap * (1 - 1e-12)
        if np.isfinite(cap):
            if f(hi) < 0:  # tail too light to cross: take the abscissa
                return hi
        else:
            while f(hi) < 0:
                hi *= 2.0
        lo = hi * 1e-9
        while f(lo) > 0 and lo > 1e-300:
            lo *= 1e-3
        return float(brentq(f, lo, hi, xtol=1e-14))


# --------------------------------------------------------------------------
# exponents of a network
# --------------------------------------------------------------------------

def exponent(spec: TreeNetworkSpec, i: int) -> LaplaceExponent:
    """Exponent handle of X_i = ((I - P')^{-1} J)_i - r_i t."""
    A = spec.inverse
    lin = spec.r[i]
    quad = 0.0
    jumps = []
    for j, comp in enumerate(spec.inputs):
        a = A[i, j]
        if a == 0:
            continue
        lin -= a * comp.drift
        if comp.kind == "brownian":
            quad += 0.5 * a * a * comp.variance
        if comp.has_jumps:
            jumps.append((comp.intensity, comp.jump_law, a))
    return LaplaceExponent(lin, quad, jumps, index=i)


def exponents(spec: TreeNetworkSpec) -> list:
    return [exponent(spec, i) for i in range(spec.n)]


def free_mean(spec: TreeNetworkSpec) -> np.ndarray:
    """E X(1) = (I - P')^{-1} E J(1) - r."""
    return spec.inverse @ spec.input_mean - spec.r


def theta_J(spec: TreeNetworkSpec, l: int, b):
    """Cumulant -log E exp(-b J_l(1)); b may be inf for subordinators."""
    comp: LevyComponentSpec = spec.inputs[l]
    if not comp.is_subordinator:
        raise PreconditionError(f"input {l} is not a subordinator")
    return comp.cumulant(b)


def theta_upsilon(spec: TreeNetworkSpec, l: int, b):
    """Cumulant of Upsilon_l(t) = J_l(t) + (p_{l-1,l} r_{l-1} - r_l) t on a tandem."""
    if l < 1:
        raise ValueError("Upsilon is defined for stations 1..n-1 (0-based)")
    td = derive_tandem(spec)
    u = td.upsilon_drift[l]
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        lin = np.where((b == 0) | (u == 0), 0.0, u * b)
    return theta_J(spec, l, b) + lin


# --------------------------------------------------------------------------
# sample paths
# --------------------------------------------------------------------------

@dataclass
class SamplePath:
    """Piecewise-linear path with jumps: value(t) = start + sum of jumps up to t + drift t.

    ``component[k]`` names the input that fired event k (-1 for Brownian grid
    increments).  ``marks`` optionally carries one mark per event.
    """

    horizon: float
    times: np.ndarray
    jumps: np.ndarray
    drift: np.ndarray
    component: np.ndarray
    marks: np.ndarray | None = None
    delta: float | None = None
    start: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.drift = np.asarray(self.drift, dtype=float).reshape(-1)
        n = self.drift.size
        self.jumps = np.asarray(self.jumps, dtype=float).reshape(-1, n)
        self.component = np.asarray(self.component, dtype=int).reshape(-1)
        if self.start is None:
            self.start = np.zeros(n)
        if self.times.size and (np.any(np.diff(self.times) <= 0) or self.times[0] <= 0 or self.times[-1] > self.horizon):
            raise ValueError("event times must be strictly increasing inside (0, horizon]")

    @property
    def n(self) -> int:
        return self.drift.size

    def knots(self):
        """Knot times (duplicated at jumps, left value first) and values, shape (m,), (m, n)."""
        K = self.times.size
        t = np.empty(2 * K + 2)
        t[0] = 0.0
        t[1:-1:2] = self.times
        t[2:-1:2] = self.times
        t[-1] = self.horizon
        post = self.start + np.cumsum(self.jumps, axis=0) + np.outer(self.times, self.drift)
        v = np.empty((2 * K + 2, self.n))
        v[0] = self.start
        v[1:-1:2] = post - self.jumps
        v[2:-1:2] = post
        v[-1] = self.start + (self.jumps.sum(axis=0) + self.drift * self.horizon)
        return t, v

    def value(self, t, side="right"):
        """Path value at times t (right-continuous by default, left limits with side='left')."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cum = np.vstack([np.zeros(self.n), np.cumsum(self.jumps, axis=0)])
        k = np.searchsorted(self.times, t, side="right" if side == "right" else "left")
        out = self.start + cum[k] + np.outer(t, self.drift)
        return out[0] if scalar else out

    def mapped(self, M, drift) -> "SamplePath":
        """Linear image: jumps -> M @ jump, start -> M @ start, new drift."""
        M = np.asarray(M, dtype=float)
        return SamplePath(
            self.horizon, self.times.copy(), self.jumps @ M.T, drift, self.component.copy(),
            None if self.marks is None else self.marks.copy(), self.delta, M @ self.start,
        )

    def to_csv(self, fh):
        """Rows (t, component, jump_size, drift_segment_rate), one per nonzero jump entry."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "component", "jump_size", "drift_segment_rate"])
        for k in range(self.times.size):
            for j in np.flatnonzero(self.jumps[k]):
                w.writerow([repr(float(self.times[k])), int(j), repr(float(self.jumps[k, j])), repr(float(self.drift[j]))])


def sample_path(spec: TreeNetworkSpec, T: float, seed, delta: float = DEFAULT_DELTA) -> SamplePath:
    """Exact event-driven sample of the input J on [0, T].

    Compound Poisson components get Poisson event counts and uniform order
    statistics; Brownian components contribute Gaussian increments on the
    grid delta, 2 delta, ... merged into the event list.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    n = spec.n
    times, comps, sizes = [], [], []
    for j, c in enumerate(spec.inputs):
        if c.has_jumps:
            k = rng.poisson(c.intensity * T)
            tj = np.sort(rng.uniform(0.0, T, k))
            times.append(tj)
            comps.append(np.full(k, j))
            sizes.append(c.jump_law.sample(rng, k))
    brown = [j for j, c in enumerate(spec.inputs) if c.kind == "brownian"]
    has_grid = bool(brown)
    if times:
        t = np.concatenate(times)
        comp = np.concatenate(comps)
        z = np.concatenate(sizes)
    else:
        t, comp, z = np.empty(0), np.empty(0, int), np.empty(0)
    jumps = np.zeros((t.size, n))
    jumps[np.arange(t.size), comp] = z
    if has_grid:
        m = int(np.floor(T / delta + 1e-9))
        g = delta * np.arange(1, m + 1)
        gj = np.zeros((m, n))
        for j in brown:
            gj[:, j] = rng.normal(0.0, np.sqrt(spec.inputs[j].variance * delta), m)
        t = np.concatenate([t, g])
        comp = np.concatenate([comp, np.full(m, -1)])
        jumps = np.vstack([jumps, gj])
    order = np.argsort(t, kind="stable")
    t, comp, jumps = t[order], comp[order], jumps[order]
    if t.size and np.any(np.diff(t) <= 0):
        # a jump landing on a grid point is a probability-zero event; merge it
        keep = np.concatenate([[True], np.diff(t) > 0])
        idx = np.cumsum(keep) - 1
        merged = np.zeros((keep.sum(), n))
        np.add.at(merged, idx, jumps)
        t, comp, jumps = t[keep], comp[keep], merged
    return SamplePath(float(T), t, jumps, spec.input_drift, comp, delta=delta if has_grid else None)
