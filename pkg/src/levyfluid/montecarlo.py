"""Monte Carlo oracle: stationary functionals from free-process path summaries.

Stationary quantities are read off one long path of the free process X:
W = (I - P') sup X, busy ages = first argmax G, idle ages = last-passage
start H.  Compound Poisson networks use an exact batched sampler; networks
with a Brownian input fall back to per-path grid simulation.

Randomness is counter based: batch b draws from
``SeedSequence(seed, spawn_key=(b,))`` with a fixed batch size, so results
do not depend on how batches are distributed over workers.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fluctuation import stationary_summary, summarize_knots, tail_margins
from .levy import DEFAULT_DELTA, exponents, free_mean
from .model import PreconditionError, TreeNetworkSpec, validate_network

MAX_CENSORED = 1e-3
BATCH = 256


class CensoringError(RuntimeError):
    """Too many paths were cut off before their summaries became final."""


# --------------------------------------------------------------------------
# samples
# --------------------------------------------------------------------------

@dataclass
class StationarySample:
    """Per-path summaries (rows) of the free process; stationary quantities derive from them."""

    spec: TreeNetworkSpec
    xbar: np.ndarray
    g: np.ndarray
    h: np.ndarray
    converged: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.xbar.shape[0]

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(~self.converged)) if self.n_paths else 0.0

    @property
    def W(self):
        W = self.xbar - self.xbar @ self.spec.P
        scale = 1.0 + np.abs(self.xbar)
        W[np.abs(W) <= 1e-12 * scale] = 0.0
        return W

    @property
    def Wt(self):
        return self.xbar

    @property
    def B(self):
        return self.g

    Bt = B

    @property
    def I(self):
        return self.h

    It = I

    @property
    def E(self):
        return np.where(self.W > 0, self.g, 0.0)

    def field(self, name):
        return getattr(self, {"Xbar": "xbar", "G": "g", "H": "h"}.get(name, name))

    def subset(self, mask) -> "StationarySample":
        return StationarySample(self.spec, self.xbar[mask], self.g[mask], self.h[mask], self.converged[mask])


def _concat_samples(spec, parts) -> StationarySample:
    return StationarySample(
        spec,
        np.vstack([p[0] for p in parts]),
        np.vstack([p[1] for p in parts]),
        np.vstack([p[2] for p in parts]),
        np.concatenate([p[3] for p in parts]),
    )


# --------------------------------------------------------------------------
# batched compound Poisson sampler
# --------------------------------------------------------------------------

class _CPSource:
    """Merged event stream of all compound Poisson inputs, mapped to X."""

    def __init__(self, spec: TreeNetworkSpec):
        self.spec = spec
        self.A = spec.inverse
        self.slope = self.A @ spec.input_drift - spec.r
        self.cp = [j for j, c in enumerate(spec.inputs) if c.has_jumps]
        lam = np.array([spec.inputs[j].intensity for j in self.cp])
        self.total = float(lam.sum())
        self.probs = lam / self.total

    def draw(self, rng, rows, K):
        """Gaps, source index and sizes for ``rows`` paths of K events."""
        gaps = rng.exponential(1.0 / self.total, (rows, K))
        if len(self.cp) == 1:
            src = np.zeros((rows, K), dtype=np.int64)
        else:
            src = rng.choice(len(self.cp), size=(rows, K), p=self.probs)
        size = np.empty((rows, K))
        for s, j in enumerate(self.cp):
            m = src == s
            cnt = int(m.sum())
            if cnt:
                size[m] = self.spec.inputs[j].jump_law.sample(rng, cnt)
        return gaps, src, size

    def knots(self, tau, src, size, k):
        """Knot times and values of X_k: 0, then (pre, post) at every event."""
        coef = self.A[k, self.cp][src]
        jump = coef * size
        post = np.cumsum(jump, axis=1) + self.slope[k] * tau
        pre = post - jump
        B, K = tau.shape
        t = np.empty((B, 2 * K + 1))
        x = np.empty((B, 2 * K + 1))
        t[:, 0] = 0.0
        x[:, 0] = 0.0
        t[:, 1::2] = tau
        t[:, 2::2] = tau
        x[:, 1::2] = pre
        x[:, 2::2] = post
        return t, x


def _initial_events(spec, src: _CPSource, margins) -> int:
    means = free_mean(spec)
    T = float(np.max((margins + 3.0 * np.sqrt(margins)) / np.abs(means)))
    return int(min(max(32, np.ceil(1.3 * src.total * T)), 20000))


def _cp_batch(spec: TreeNetworkSpec, rows: int, seed, batch: int, max_events: int):
    src = _CPSource(spec)
    margins = tail_margins(spec)
    K0 = _initial_events(spec, src, margins)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(batch,)))
    gaps, s, z = src.draw(rng, rows, K0)
    tau = np.cumsum(gaps, axis=1)
    n = spec.n
    xbar = np.zeros((rows, n))
    g = np.zeros((rows, n))
    h = np.zeros((rows, n))
    conv = np.zeros(rows, bool)
    todo = np.arange(rows)
    while True:
        ok = np.ones(todo.size, bool)
        res = []
        for k in range(n):
            t, x = src.knots(tau, s, z, k)
            r = summarize_knots(t, x, src.slope[k], margins[k])
            res.append(r)
            ok &= r[3]
        final = ok | (tau.shape[1] >= max_events)
        idx = todo[final]
        for k in range(n):
            xbar[idx, k] = res[k][0][final]
            g[idx, k] = res[k][1][final]
            h[idx, k] = res[k][2][final]
        conv[idx] = ok[final]
        keep = ~final
        if not keep.any():
            break
        # extend the unfinished paths by as many events again
        todo = todo[keep]
        tau, s, z = tau[keep], s[keep], z[keep]
        K = tau.shape[1]
        g2, s2, z2 = src.draw(rng, todo.size, K)
        tau = np.hstack([tau, tau[:, -1:] + np.cumsum(g2, axis=1)])
        s = np.hstack([s, s2])
        z = np.hstack([z, z2])
    return xbar, g, h, conv


def _grid_batch(spec, rows, seed, batch, delta):
    parts = []
    for r in range(rows):
        ss = np.random.SeedSequence(seed, spawn_key=(batch, r))
        sm = stationary_summary(spec, ss, delta=delta)
        parts.append((sm.xbar, sm.g, sm.h, bool(sm.converged.all())))
    return (np.array([p[0] for p in parts]), np.array([p[1] for p in parts]),
            np.array([p[2] for p in parts]), np.array([p[3] for p in parts]))


def _run_batch(args):
    spec, rows, seed, b, delta, max_events = args
    if any(c.kind == "brownian" for c in spec.inputs):
        return _grid_batch(spec, rows, seed, b, delta)
    return _cp_batch(spec, rows, seed, b, max_events)


def estimate_stationary(spec: TreeNetworkSpec, n_paths: int, seed: int, delta: float = DEFAULT_DELTA,
                        workers: int = 1, batch_size: int = BATCH, max_events: int = 1 << 18) -> StationarySample:
    """Sample ``n_paths`` stationary states via free-process summaries."""
    rep = validate_network(spec)
    if not rep.accepted:
        raise PreconditionError(f"network rejected: {rep.violated}")
    if not rep.nondegenerate:
        raise PreconditionError("degenerate network: the root input has no randomness")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    nb = -(-n_paths // batch_size)
    jobs = [(spec, min(batch_size, n_paths - b * batch_size), seed, b, delta, max_events) for b in range(nb)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_batch, jobs))
    else:
        parts = [_run_batch(j) for j in jobs]
    return _concat_samples(spec, parts)


# --------------------------------------------------------------------------
# estimates and comparison
# --------------------------------------------------------------------------

@dataclass
class TransformEstimate:
    mean: float
    se: float
    n_paths: int
    censored_fraction: float = 0.0
    z: float | None = None


def estimate_mean(values, censored_fraction: float = 0.0) -> TransformEstimate:
    """Sample mean with plug-in standard error."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("no samples")
    if v.size < 2:
        raise ValueError("standard error undefined for a single sample")
    if censored_fraction > MAX_CENSORED:
        raise CensoringError(f"censored fraction {censored_fraction:.4%} exceeds {MAX_CENSORED:.2%}")
    return TransformEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)), int(v.size), censored_fraction)


def functional(samples: StationarySample, query: dict, where=None, factor=None) -> np.ndarray:
    """exp(-sum_f <query[f], samples.f>) per path, optionally times ``factor`` and restricted to ``where``."""
    expo = np.zeros(samples.n_paths)
    for name, w in query.items():
        w = np.asarray(w, dtype=float)
        vals = samples.field(name)
        if w.size != vals.shape[1]:
            raise ValueError(f"query {name} has {w.size} entries, samples have {vals.shape[1]}")
        nz = w != 0
        if nz.any():
            expo = expo + vals[:, nz] @ w[nz]
    f = np.exp(-expo)
    if factor is not None:
        f = f * factor
    if where is not None:
        f = f[where]
    return f


def estimate_transform(samples: StationarySample, query: dict, where=None, factor=None) -> TransformEstimate:
    """Monte Carlo estimate of E exp(-<., .>) over the samples (conditional when ``where`` is given)."""
    if samples.n_paths == 0:
        raise ValueError("no samples")
    return estimate_mean(functional(samples, query, where, factor), samples.censored_fraction)


@dataclass
class Verdict:
    passed: bool
    analytic: float
    mean: float
    se: float
    z: float
    rel_gap: float
    label: str = ""

    def row(self):
        return [self.label, repr(self.analytic), repr(self.mean), repr(self.se), repr(self.z),
                "pass" if self.passed else "fail"]


def compare(analytic: float, est: TransformEstimate, label: str = "", z_max: float = 3.0,
            rel_max: float = 0.02) -> Verdict:
    """Pass iff |z| <= z_max and the relative gap is at most rel_max."""
    diff = analytic - est.mean
    if est.se > 0:
        z = diff / est.se
    else:
        z = 0.0 if diff == 0 else np.inf
    rel = abs(diff) / abs(analytic) if analytic != 0 else abs(diff)
    est.z = z
    return Verdict(bool(abs(z) <= z_max and rel <= rel_max), float(analytic), est.mean, est.se, float(z), float(rel), label)


def all_pass(verdicts) -> bool:
    return all(v.passed for v in verdicts)


def write_report(fh, verdicts):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["query", "analytic", "mc_mean", "mc_se", "z", "verdict"])
    for v in verdicts:
        w.writerow(v.row())


# --------------------------------------------------------------------------
# busy intervals
# --------------------------------------------------------------------------

def first_passage_below(spec: TreeNetworkSpec, i: int, levels, seed, chunk: int = 64) -> np.ndarray:
    """Exact first time a fresh X_i path goes below -levels (0 where the level is 0)."""
    levels = np.asarray(levels, dtype=float)
    src = _CPSource(spec)
    v = src.slope[i]
    if not v < 0:
        raise PreconditionError("first passage below needs a negative drift between jumps")
    rng = np.random.default_rng(seed)
    out = np.zeros(levels.size)
    todo = np.flatnonzero(levels > 0)
    t0 = np.zeros(levels.size)
    x0 = np.zeros(levels.size)
    while todo.size:
        gaps, s, z = src.draw(rng, todo.size, chunk)
        tau = t0[todo, None] + np.cumsum(gaps, axis=1)
        jump = src.A[i, src.cp][s] * z
        post = x0[todo, None] + np.cumsum(jump, axis=1) + v * (tau - t0[todo, None])
        pre = post - jump
        hit = pre <= -levels[todo, None]
        found = hit.any(axis=1)
        m = np.argmax(hit, axis=1)
        rows = np.flatnonzero(found)
        prev_t = np.where(m[rows] > 0, tau[rows, m[rows] - 1], t0[todo[rows]])
        prev_x = np.where(m[rows] > 0, post[rows, m[rows] - 1], x0[todo[rows]])
        out[todo[rows]] = prev_t + (prev_x + levels[todo[rows]]) / (-v)
        rest = ~found
        t0[todo[rest]] = tau[rest, -1]
        x0[todo[rest]] = post[rest, -1]
        todo = todo[rest]
    return out


def busy_interval_sample(samples: StationarySample, i: int, seed):
    """(B_i, D_i, V_i): busy age, remaining busy time from an independent future, and their sum."""
    B = samples.g[:, i]
    D = first_passage_below(samples.spec, i, samples.xbar[:, i], seed)
    return B, D, B + D


# --------------------------------------------------------------------------
# forward simulation from a given initial content
# --------------------------------------------------------------------------

def transient_W(spec: TreeNetworkSpec, t_end: float, n_paths: int, seed, w0=None) -> np.ndarray:
    """W(t_end) started from w0, by exact reflection of batched compound Poisson paths.

    Uses W~(t) = x + X(t) + max(0, -x - inf_{s<=t} X(s)) with x = A w0 and
    W = (I - P') W~.
    """
    w0 = spec.w0 if w0 is None else np.asarray(w0, dtype=float)
    src = _CPSource(spec)
    A = spec.inverse
    x = A @ w0
    rng = np.random.default_rng(seed)
    n = spec.n
    out = np.empty((n_paths, n))
    K = int(np.ceil(src.total * t_end + 8 * np.sqrt(src.total * t_end) + 16))
    for lo in range(0, n_paths, BATCH):
        rows = min(BATCH, n_paths - lo)
        gaps, s, z = src.draw(rng, rows, K)
        tau = np.cumsum(gaps, axis=1)
        if np.any(tau[:, -1] < t_end):
            raise RuntimeError("event budget too small for the requested horizon")
        inside = tau <= t_end
        z = np.where(inside, z, 0.0)
        tau_c = np.minimum(tau, t_end)
        Wt = np.empty((rows, n))
        for k in range(n):
            coef = src.A[k, src.cp][s]
            jump = coef * z
            cum = np.cumsum(jump, axis=1)
            pre = cum - jump + src.slope[k] * tau_c
            X_end = cum[:, -1] + src.slope[k] * t_end
            low = np.minimum(0.0, np.minimum(pre.min(axis=1), X_end))
            Wt[:, k] = x[k] + X_end + np.maximum(0.0, -x[k] - low)
        out[lo:lo + rows] = Wt - Wt @ spec.P
    return out


def g_ordering_violations(samples: StationarySample) -> int:
    """Paths on which G_1 <= ... <= G_n fails."""
    return int(np.sum(np.any(np.diff(samples.g, axis=1) < 0, axis=1)))
