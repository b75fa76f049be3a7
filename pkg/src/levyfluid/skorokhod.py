"""Reflection of a tree network driver: explicit solution and sequential oracle.

Both solvers work on the exact knot grid of a piecewise-linear path.  Between
knots every driver is linear, so a running supremum can only start to grow
at an interior "catch-up" point where the segment crosses the current
maximum.  Those points are inserted as extra knots; afterwards every
trajectory (W, L, W~) is linear between consecutive knots.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .levy import SamplePath
from .model import PreconditionError, TreeNetworkSpec, validate_network

ZERO_TOL = 1e-10  # relative tolerance for snapping differences of aggregates to 0


def _check(spec: TreeNetworkSpec, path: SamplePath):
    rep = validate_network(spec)
    bad = [c for c in ("N1", "N2", "N3") if not rep.checks[c]]
    if bad:
        raise PreconditionError(f"structural conditions violated: {bad}: " + "; ".join(rep.messages[c] for c in bad))
    if path.n != spec.n:
        raise ValueError(f"path has {path.n} components, network has {spec.n}")


def _interp_insert(t, arrays, new_t):
    """Insert times ``new_t`` (strictly inside non-jump pieces) and interpolate every array."""
    if new_t.size == 0:
        return t, arrays
    new_t = np.unique(new_t)
    # piece index: last knot with time < new_t; pieces of zero length are never hit
    k = np.searchsorted(t, new_t, side="right") - 1
    keep = (new_t > t[k]) & (k + 1 < t.size)
    keep &= new_t < t[np.minimum(k + 1, t.size - 1)]
    new_t, k = new_t[keep], k[keep]
    if new_t.size == 0:
        return t, arrays
    frac = (new_t - t[k]) / (t[k + 1] - t[k])
    pos = k + 1
    out_t = np.insert(t, pos, new_t)
    out = []
    for a in arrays:
        va = a[k] + frac[:, None] * (a[k + 1] - a[k]) if a.ndim == 2 else a[k] + frac * (a[k + 1] - a[k])
        out.append(np.insert(a, pos, va, axis=0))
    return out_t, out


def _catch_up_times(t, v):
    """Times where the running max (floored at 0) of v starts to increase mid-piece.

    ``v`` has shape (m,) or (m, n).  Returns the times and, per time, the
    level the maximum had reached (for exact pinning).
    """
    v2 = v if v.ndim == 2 else v[:, None]
    M = np.maximum.accumulate(np.vstack([np.zeros((1, v2.shape[1])), v2]), axis=0)[1:]
    a, b, Mk = v2[:-1], v2[1:], M[:-1]
    dt = (t[1:] - t[:-1])[:, None]
    hit = (dt > 0) & (b > Mk) & (a < Mk)
    ki, ci = np.nonzero(hit)
    tc = t[ki] + (Mk[ki, ci] - a[ki, ci]) / (b[ki, ci] - a[ki, ci]) * dt[ki, 0]
    return tc, ci, Mk[ki, ci]


def _pin(t, v, tc, comp, level):
    """Overwrite v at inserted crossing knots with the exact level reached there."""
    if tc.size == 0:
        return
    idx = np.searchsorted(t, tc)
    ok = (idx < t.size) & (t[np.minimum(idx, t.size - 1)] == tc)
    if v.ndim == 1:
        v[idx[ok]] = level[ok]
    else:
        v[idx[ok], comp[ok]] = level[ok]


@dataclass
class ReflectionResult:
    """Knot-indexed trajectories; every quantity is linear between consecutive knots.

    Ages (B, I, B~, I~, E) are stored at knots; ``extract_ages`` evaluates them
    at arbitrary times.
    """

    spec: TreeNetworkSpec
    t: np.ndarray
    W: np.ndarray
    L: np.ndarray
    Wt: np.ndarray
    method: str

    def __post_init__(self):
        self.last_zero = _last_zero(self.t, self.W)
        self.last_pos = _last_pos(self.t, self.W)
        self.last_zero_t = _last_zero(self.t, self.Wt)
        self.last_pos_t = _last_pos(self.t, self.Wt)

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def B(self):
        return self.t[:, None] - self.last_zero

    @property
    def I(self):
        return np.where(self.W == 0, self.t[:, None] - self.last_pos, 0.0)

    @property
    def Bt(self):
        return self.t[:, None] - self.last_zero_t

    @property
    def It(self):
        return np.where(self.Wt == 0, self.t[:, None] - self.last_pos_t, 0.0)

    @property
    def E(self):
        return np.where(self.W > 0, self.Bt, 0.0)

    def evaluate(self, times, which="W", side="right"):
        """Interpolate W, L or Wt at arbitrary times (right-continuous or left limits)."""
        arr = {"W": self.W, "L": self.L, "Wt": self.Wt}[which]
        times = np.atleast_1d(np.asarray(times, dtype=float))
        t = self.t
        if side == "right":
            k = np.searchsorted(t, times, side="right") - 1
        else:
            k = np.searchsorted(t, times, side="left") - 1
            # an exact knot hit returns the first (pre-jump) copy
            hitk = np.searchsorted(t, times, side="left")
            exact = (hitk < t.size) & (t[np.minimum(hitk, t.size - 1)] == times)
            k = np.where(exact, hitk, k)
        k = np.clip(k, 0, t.size - 1)
        nxt = np.minimum(k + 1, t.size - 1)
        span = t[nxt] - t[k]
        frac = np.where(span > 0, (times - t[k]) / np.where(span > 0, span, 1.0), 0.0)
        frac = np.clip(frac, 0.0, 1.0)
        return arr[k] + frac[:, None] * (arr[nxt] - arr[k])

    def to_csv(self, fh):
        n = self.W.shape[1]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"W_{j + 1}" for j in range(n)] + [f"L_{j + 1}" for j in range(n)])
        for k in range(self.t.size):
            w.writerow([repr(float(self.t[k]))] + [repr(float(x)) for x in self.W[k]] + [repr(float(x)) for x in self.L[k]])


def _last_zero(t, W):
    """At each knot, the last time <= t_k at which the component was 0."""
    m, n = W.shape
    z = W == 0
    idx = np.where(z, np.arange(m)[:, None], -1)
    idx = np.maximum.accumulate(idx, axis=0)
    # never zero so far: measure from time 0
    return np.where(idx >= 0, t[np.maximum(idx, 0)], 0.0)


def _last_pos(t, W):
    """At each knot, sup of times <= t_k where the component was positive.

    A piece that ends at zero coming from a positive value counts up to its
    end point (the supremum is not attained but equals the end time).
    """
    m, n = W.shape
    pos = W > 0
    prev = np.vstack([np.zeros((1, n), bool), pos[:-1]])
    flag = pos | prev
    idx = np.where(flag, np.arange(m)[:, None], -1)
    idx = np.maximum.accumulate(idx, axis=0)
    return np.where(idx >= 0, t[np.maximum(idx, 0)], 0.0)


def _driver(spec: TreeNetworkSpec, path: SamplePath):
    """Knots of Y(t) = J(t) - (I - P') r t."""
    t, J = path.knots()
    net = spec.r - spec.P.T @ spec.r
    return t, J - np.outer(t, net)


def reflect_explicit(spec: TreeNetworkSpec, path: SamplePath) -> ReflectionResult:
    """W~ = x + X + L with L = 0 v sup(-x - X), x = A w, X = A Y, and W = (I - P') W~."""
    _check(spec, path)
    A = spec.inverse
    t, Y = _driver(spec, path)
    Z = (Y + spec.w0) @ A.T  # x + X
    tc, comp, level = _catch_up_times(t, -Z)
    t, (Z,) = _interp_insert(t, [Z], tc)
    _pin(t, Z, tc, comp, -level)
    L = np.maximum.accumulate(np.vstack([np.zeros((1, spec.n)), -Z]), axis=0)[1:] + 0.0  # no -0.0
    Wt = Z + L
    IP = np.eye(spec.n) - spec.P.T
    W = Wt @ IP.T
    scale = 1.0 + float(np.abs(Wt).max(initial=0.0))
    W[np.abs(W) <= ZERO_TOL * scale] = 0.0
    return ReflectionResult(spec, t, W, L, Wt, "explicit")


def reflect_fixed_point(spec: TreeNetworkSpec, path: SamplePath) -> ReflectionResult:
    """Station-by-station solution of L_i = 0 v sup[(P'L)_i - w_i - Y_i].

    Stations are processed in index order, which is topological because P is
    strictly upper triangular.  Each station can add knots; earlier L's are
    linear between their own knots so interpolation onto the refined grid is
    exact.
    """
    _check(spec, path)
    t, Y = _driver(spec, path)
    n = spec.n
    L = np.zeros((t.size, n))
    U = np.zeros((t.size, n))
    for i in range(n):
        par = spec.parent(i)
        u = spec.w0[i] + Y[:, i]
        if par is not None:
            u = u - spec.P[par, i] * L[:, par]
        tc, _, level = _catch_up_times(t, -u)
        t, (Y, L, U, u) = _interp_insert(t, [Y, L, U, u], tc)
        _pin(t, u, tc, None, -level)
        L[:, i] = np.maximum.accumulate(np.concatenate([[0.0], -u]))[1:] + 0.0
        U[:, i] = u
    W = U + L
    Wt = W @ spec.inverse.T
    scale = 1.0 + float(np.abs(Wt).max(initial=0.0))
    Wt[np.abs(Wt) <= ZERO_TOL * scale] = 0.0
    return ReflectionResult(spec, t, W, L, Wt, "fixed-point")


def sup_distance(a: ReflectionResult, b: ReflectionResult, which=("W", "L")) -> float:
    """Sup-norm gap over the union of both knot sets, left and right values."""
    times = np.union1d(a.t, b.t)
    gap = 0.0
    for w in which:
        for side in ("left", "right"):
            gap = max(gap, float(np.max(np.abs(a.evaluate(times, w, side) - b.evaluate(times, w, side)))))
    return gap


def check_dynamics(res: ReflectionResult, tol: float = 1e-9) -> dict:
    """S1-S4 on the knot grid: W >= 0, L(0) = 0, L nondecreasing, dL > 0 only where W = 0.

    Returns a dict of booleans; complementarity is exact (W == 0 at both
    ends of every piece on which L grows).
    """
    W, L = res.W, res.L
    dL = np.diff(L, axis=0)
    grows = dL > 0
    comp = np.all(~grows | ((W[:-1] == 0) & (W[1:] == 0)))
    ex = {
        "W_nonneg": bool(np.all(W >= 0)),
        "L_start_zero": bool(np.all(L[0] == 0)),
        "L_nondecreasing": bool(np.all(dL >= -tol)),
        "complementarity": bool(comp),
        "W_start": bool(np.allclose(W[0], res.spec.w0, atol=tol, rtol=0)),
    }
    # single status per station and time: busy, idle, or both zero
    B, I = res.B, res.I
    ex["age_exclusive"] = bool(np.all((B == 0) | (I == 0)))
    return ex


def extract_ages(res: ReflectionResult, t: float):
    """(B, I, B~, I~, E) at time t, right-continuous convention."""
    if t < 0 or t > res.horizon:
        raise ValueError(f"t = {t} outside [0, {res.horizon}]")
    W = res.evaluate(t, "W")[0]
    Wt = res.evaluate(t, "Wt")[0]
    k = int(np.searchsorted(res.t, t, side="right") - 1)
    exact = res.t[k] == t

    def ages(Wnow, lz, lp, Wk):
        if exact:
            last_zero, last_pos = lz[k], lp[k]
        else:
            last_zero = np.where(Wnow == 0, t, lz[k])
            last_pos = np.where((Wnow > 0) | (Wk > 0), t, lp[k])
        return t - last_zero, np.where(Wnow == 0, t - last_pos, 0.0)

    B, I = ages(W, res.last_zero, res.last_pos, res.W[k])
    Bt, It = ages(Wt, res.last_zero_t, res.last_pos_t, res.Wt[k])
    E = np.where(W > 0, Bt, 0.0)
    return B, I, Bt, It, E
