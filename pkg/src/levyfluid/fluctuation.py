"""Free process X and its path functionals (sup, first argmax, last-passage start).

``summarize_knots`` is the vectorised core shared by the single-path API and
the batched Monte Carlo sampler.  It works on knot arrays in which a jump
appears as two knots with equal time (left value first).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .levy import DEFAULT_DELTA, SamplePath, exponents, sample_path
from .model import PreconditionError, TreeNetworkSpec

# tail probability allowed for a later excursion to overturn the summary
TAIL_PROB = 1e-5


@dataclass
class FluctuationSummary:
    """Per-component (sup X, first time at the sup, last-passage start).

    ``converged[k]`` says the path ran long enough that a later excursion
    above the relevant level has probability below ``TAIL_PROB``;
    ``censored[k]`` says H_k was capped at the horizon.
    """

    xbar: np.ndarray
    g: np.ndarray
    h: np.ndarray
    converged: np.ndarray
    censored: np.ndarray
    horizon: float


def tail_margins(spec: TreeNetworkSpec) -> np.ndarray:
    """Distance below the current level after which the summary is final w.p. 1 - TAIL_PROB."""
    out = []
    for e in exponents(spec):
        if not e.mean < 0:
            raise PreconditionError(f"Assumption D violated: E X_{e.index + 1}(1) = {e.mean} >= 0")
        out.append(np.log(1.0 / TAIL_PROB) / e.adjustment_coefficient())
    return np.array(out)


def build_X(spec: TreeNetworkSpec, path: SamplePath) -> SamplePath:
    """X(t) = (I - P')^{-1} J(t) - r t as a path with mapped jumps and drift."""
    if path.n != spec.n:
        raise ValueError(f"path has {path.n} components, network has {spec.n}")
    A = spec.inverse
    drift = A @ spec.input_drift - spec.r
    x = path.mapped(A, drift)
    x.start = np.zeros(spec.n)
    return x


def summarize_knots(t, x, slope, margin=0.0):
    """Sup, first argmax, last-passage start and convergence for knot rows.

    Parameters
    ----------
    t, x : ndarray, shape (B, m)
        Knot times (nondecreasing, equal times mark a jump) and values; x[:, 0] = 0.
    slope : float
        Drift of the component between knots.
    margin : float
        Required gap below the relevant level at the last knot.

    Returns
    -------
    xbar, g, h, converged, censored : ndarrays of shape (B,)
    """
    t = np.atleast_2d(t)
    x = np.atleast_2d(x)
    B, m = x.shape
    rows = np.arange(B)
    j = np.argmax(x, axis=1)  # first index of the max; pre-jump knots come first
    xbar = x[rows, j]
    g = t[rows, j]

    F = np.maximum.accumulate(x[:, ::-1], axis=1)[:, ::-1]
    ta, xa = t[:, :-1], x[:, :-1]
    xb, Fb = x[:, 1:], F[:, 1:]
    cont = t[:, 1:] > ta
    if slope < 0:
        hit = cont & (Fb > xb)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = ta + np.maximum(0.0, (xa - Fb) / (-slope))
    elif slope > 0:
        hit = cont
        cand = ta
    else:
        hit = cont & (Fb > xa)
        cand = ta
    any_hit = hit.any(axis=1)
    p = np.argmax(hit, axis=1)
    h = np.where(any_hit, cand[rows, p], t[:, -1])
    h = np.where(xbar > 0, 0.0, h)
    xh = np.where(any_hit, xa[rows, p] + slope * (h - ta[rows, p]), -np.inf)
    level = np.where(xbar > 0, xbar, xh)
    censored = (xbar <= 0) & ~any_hit
    converged = (~censored) & (x[:, -1] < level - margin)
    return xbar, g, h, converged, censored


def summarize_path(xpath: SamplePath, margins=None) -> FluctuationSummary:
    """Summaries of every component of one X path.

    ``margins`` (per component) controls the convergence flag; pass the output
    of :func:`tail_margins`.  Without margins a component counts as converged
    once its terminal value is below the relevant level.
    """
    if np.any(xpath.drift >= 0) and xpath.delta is None:
        bad = np.flatnonzero(xpath.drift >= 0)
        raise PreconditionError(f"components {bad.tolist()} have nonnegative drift; X cannot drift to -inf")
    t, v = xpath.knots()
    n = xpath.n
    margins = np.zeros(n) if margins is None else np.asarray(margins, dtype=float)
    out = [summarize_knots(t[None, :], v[None, :, k], xpath.drift[k], margins[k]) for k in range(n)]
    xbar, g, h, conv, cens = (np.array([o[i][0] for o in out]) for i in range(5))
    return FluctuationSummary(xbar, g, h, conv, cens, xpath.horizon)


def _concat(a: SamplePath, b: SamplePath) -> SamplePath:
    """Path a followed by path b shifted to start at a's horizon."""
    return SamplePath(
        a.horizon + b.horizon,
        np.concatenate([a.times, a.horizon + b.times]),
        np.vstack([a.jumps, b.jumps]),
        a.drift,
        np.concatenate([a.component, b.component]),
        None,
        a.delta,
        a.start,
    )


def stationary_summary(spec: TreeNetworkSpec, seed, T0: float = 64.0, delta: float = DEFAULT_DELTA,
                       max_horizon: float = 1e6) -> FluctuationSummary:
    """Extend one free path by doubling until every component is converged.

    The path is extended (never resampled), so conditioning on convergence
    does not bias the functionals.
    """
    margins = tail_margins(spec)
    ss = np.random.SeedSequence(seed)
    piece = 0
    path = sample_path(spec, T0, np.random.default_rng(ss.spawn(1)[0]), delta)
    while True:
        s = summarize_path(build_X(spec, path), margins)
        if s.converged.all() or path.horizon >= max_horizon:
            return s
        piece += 1
        more = sample_path(spec, path.horizon, np.random.default_rng(ss.spawn(1)[0]), delta)
        path = _concat(path, more)
