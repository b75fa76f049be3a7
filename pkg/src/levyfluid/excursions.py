"""Excursion calculus for a compound Poisson process with negative drift.

Covers the undershoot/length/mark transform of one excursion started from a
jump, the backward-recurrence identity for a Poisson process stopped at an
independent time, and the nested-excursion transforms of a single-input
tandem (stations 0-based, c_j = r_j - d strictly decreasing).  Each formula
comes with a direct simulator used as its Monte Carlo oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .levy import LaplaceExponent
from .model import JumpLaw, PreconditionError, TreeNetworkSpec
from .transforms import _check_single_cp

# --------------------------------------------------------------------------
# a single excursion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExcursionModel:
    """Z(t) = xi + Pi(t) - c t with Pi compound Poisson(lam, law), xi ~ law.

    ``mark`` is ``"identity"`` (mark = jump size) or a float (constant mark).
    """

    c: float
    lam: float
    law: JumpLaw
    mark: object = "identity"

    def __post_init__(self):
        if not (self.c > 0 and self.lam > 0):
            raise ValueError("need c > 0 and lam > 0")
        if not self.lam * self.law.mean < self.c:
            raise PreconditionError(f"unstable excursion model: lam E[jump] = {self.lam * self.law.mean} >= c = {self.c}")

    @property
    def exponent(self) -> LaplaceExponent:
        return LaplaceExponent.compound_poisson(self.c, self.lam, self.law)

    def mark_transform(self, s, kappa):
        """E exp(-s xi - kappa M)."""
        if self.mark == "identity":
            return float(self.law.laplace(s + kappa))
        return float(np.exp(-kappa * float(self.mark)) * self.law.laplace(s))

    def marks_of(self, jumps):
        if self.mark == "identity":
            return jumps
        return np.full_like(jumps, float(self.mark))


def undershoot_transform(model: ExcursionModel, beta: float, gamma: float, kappa: float = 0.0,
                         form: str = "phi") -> float:
    """E exp(-beta (tau - T_last) - gamma tau - kappa M_last) for one excursion.

    ``form='phi'`` uses lam + gamma - c Phi(gamma); ``form='length'`` uses
    lam E exp(-gamma tau) = lam Fhat(Phi(gamma)).
    """
    if min(beta, gamma, kappa) < 0:
        raise ValueError("arguments must be nonnegative")
    e = model.exponent
    s = (beta + gamma + model.lam) / model.c
    tail = model.mark_transform(s, kappa)
    den = beta + model.lam * float(model.law.laplace(s))
    if form == "phi":
        num = beta + gamma - model.c * e.phi(gamma) + model.lam
    elif form == "length":
        num = beta + model.lam * float(model.law.laplace(e.phi(gamma)))
    else:
        raise ValueError(f"unknown form {form!r}")
    return num * tail / den


def length_identity_gap(model: ExcursionModel, gamma: float) -> float:
    """gamma - [c Phi(gamma) + lam (Fhat(Phi(gamma)) - 1)]; zero by definition of Phi."""
    p = model.exponent.phi(gamma)
    return gamma - (model.c * p + model.lam * (float(model.law.laplace(p)) - 1.0))


def simulate_excursions(model: ExcursionModel, size: int, seed) -> dict:
    """Direct simulation of ``size`` excursions started from a jump.

    Returns arrays ``tau`` (length), ``under`` (tau - last jump epoch) and
    ``mark`` (mark of the last jump, the initial one if none).
    """
    rng = np.random.default_rng(seed)
    xi = model.law.sample(rng, size)
    z = xi.copy()
    tlast = np.zeros(size)
    mark = model.marks_of(xi).astype(float)
    tau = np.full(size, np.nan)
    live = np.arange(size)
    while live.size:
        g = rng.exponential(1.0 / model.lam, live.size)
        zl = z[live]
        ends = zl - model.c * g <= 0
        done = live[ends]
        tau[done] = tlast[done] + zl[ends] / model.c
        cont = live[~ends]
        y = model.law.sample(rng, cont.size)
        tlast[cont] += g[~ends]
        z[cont] = zl[~ends] - model.c * g[~ends] + y
        mark[cont] = model.marks_of(y)
        live = cont
    return {"tau": tau, "under": tau - tlast, "mark": mark}


# --------------------------------------------------------------------------
# backward recurrence time
# --------------------------------------------------------------------------

def recurrence_transform(mu: float, zeta_law: JumpLaw, s: float, beta: float, gamma: float) -> float:
    """E s^{N(zeta)} exp(-beta A(zeta) - gamma zeta) for a rate-mu Poisson process."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not 0 <= s <= 1:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    if beta < 0 or gamma < 0:
        raise ValueError("beta, gamma must be nonnegative")
    if beta + s * mu == 0:
        return float(zeta_law.laplace(gamma + mu))
    w = beta / (beta + s * mu)
    return w * float(zeta_law.laplace(beta + gamma + mu)) + (1 - w) * float(zeta_law.laplace(gamma + (1 - s) * mu))


def simulate_recurrence(mu: float, zeta_law: JumpLaw, size: int, seed) -> dict:
    """(N(zeta), A(zeta), zeta): Poisson count, backward recurrence time, stopping time."""
    rng = np.random.default_rng(seed)
    zeta = zeta_law.sample(rng, size)
    N = rng.poisson(mu * zeta)
    V = rng.uniform(size=size)
    with np.errstate(divide="ignore"):
        A = np.where(N > 0, zeta * (1.0 - V ** (1.0 / np.maximum(N, 1))), zeta)
    return {"N": N, "A": A, "zeta": zeta}


# --------------------------------------------------------------------------
# nested excursions of a single-input tandem
# --------------------------------------------------------------------------

def _cp_setup(spec: TreeNetworkSpec):
    c = _check_single_cp(spec)
    return c.td.c, c.td.lam, c.exps


def coefficient_C(c, lam, j: int, k: int, beta) -> float:
    """C_j^k(beta) = c_j sum_{l=j}^{k-1} (1/c_{l+1} - 1/c_l)(lam + beta_l)."""
    return float(c[j] * sum((1.0 / c[l + 1] - 1.0 / c[l]) * (lam + beta[l]) for l in range(j, k)))


def coefficient_D(c, lam, j: int, k: int, gamma) -> float:
    """D_j^k(gamma): C_j^k with beta_l = gamma_0 + ... + gamma_l."""
    return coefficient_C(c, lam, j, k, np.cumsum(np.asarray(gamma, dtype=float)))


def excursion_length_transform(spec: TreeNetworkSpec, i: int, gamma: float) -> float:
    """E exp(-gamma (rho_i - sigma_i)) for the first excursion of station i."""
    c, lam, exps = _cp_setup(spec)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return (lam + gamma - c[i] * exps[i].phi(gamma)) / lam


def rho_recursion_step(spec: TreeNetworkSpec, i: int, beta, gamma, lower=None) -> float:
    """Level-i transform of the spacings and excursion lengths from the level-(i-1) value.

    beta has i entries (spacings rho_{j+1} - rho_j), gamma has i + 1 entries
    (lengths rho_j - sigma_j).  ``lower`` is the level-(i-1) transform at
    the shifted arguments; computed recursively when omitted.
    """
    c, lam, exps = _cp_setup(spec)
    if not 0 <= i < spec.n:
        raise IndexError(f"level {i} out of range")
    beta = np.asarray(beta, dtype=float).reshape(-1)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if beta.size != i or gamma.size != i + 1:
        raise ValueError(f"level {i} needs {i} spacing and {i + 1} length arguments")
    if i == 0:
        return (lam + gamma[0] - c[0] * exps[0].phi(gamma[0])) / lam
    q = (c[i - 1] / c[i] - 1.0) * (lam + beta[i - 1]) + (c[i - 1] / c[i]) * gamma[i]
    num = beta[i - 1] + lam + gamma[i] - c[i] * exps[i].phi(gamma[i])
    den = beta[i - 1] + lam + q - c[i - 1] * exps[i - 1].phi(q)
    if lower is None:
        g2 = gamma[:i].copy()
        g2[i - 1] += q
        lower = rho_recursion_step(spec, i - 1, beta[:i - 1], g2)
    return num / den * lower


def rho_transform(spec: TreeNetworkSpec, k: int, beta, gamma: float = 0.0) -> float:
    """E exp(-sum_j beta_j (rho_{j+1} - rho_j) - gamma (rho_k - sigma_k)), closed quasi-product."""
    c, lam, exps = _cp_setup(spec)
    if not 1 <= k < spec.n:
        raise IndexError(f"k must be in 1..{spec.n - 1}")
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != k:
        raise ValueError(f"beta needs {k} entries")
    q = [coefficient_C(c, lam, j, k, beta) + c[j] / c[k] * gamma for j in range(k + 1)]
    lm = [lam + q[j] - c[j] * exps[j].phi(q[j]) for j in range(k + 1)]  # lam E exp(-q_j (rho_j - sigma_j))
    val = lm[0] / lam
    for j in range(k):
        val *= (beta[j] + lm[j + 1]) / (beta[j] + lm[j])
    return val


def H_transform_conditioned(spec: TreeNetworkSpec, k: int, gamma, printed_index: bool = False) -> float:
    """E[exp(-sum_{l<=k} gamma_l H_l) | Xbar_k = 0].

    The default uses the upper limit k-1 in every correction sum, which
    telescopes to lam / (lam + gamma_k) when gamma_l = 0 for l < k.
    ``printed_index=True`` extends the denominator sum to l = k.
    """
    c, lam, exps = _cp_setup(spec)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.size != k + 1:
        raise ValueError(f"gamma needs {k + 1} entries")
    if np.any(gamma < 0):
        raise ValueError("gamma must be nonnegative")
    D = [coefficient_D(c, lam, j, k, gamma) for j in range(k + 1)]
    g_lo = gamma[:k].sum()
    first = (lam + np.sum(gamma[:k] * (1.0 - c[k] / c[:k])) - c[k] * exps[0].phi(D[0])) / (lam + gamma.sum())
    val = first
    for j in range(k):
        A = lam + g_lo - np.sum(c[k] / c[j + 1:k] * gamma[j + 1:k])
        Aden = A - gamma[k] if printed_index else A
        val *= (A - c[k] * exps[j + 1].phi(D[j + 1])) / (Aden - c[k] * exps[j].phi(D[j]))
    return float(val)


def H_transform_via_rho(spec: TreeNetworkSpec, k: int, gamma) -> float:
    """Same quantity as lam/(lam + sum gamma) times the spacing transform at beta_j = sum_{p<=j} gamma_p."""
    c, lam, exps = _cp_setup(spec)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if k == 0:
        return lam / (lam + gamma[0])
    return lam / (lam + gamma.sum()) * rho_transform(spec, k, np.cumsum(gamma[:k]), 0.0)


def simulate_nested_excursions(spec: TreeNetworkSpec, k: int, size: int, seed, chunk: int = 64) -> dict:
    """Excursion structure of X_j = Pi - c_j t, j <= k, up to the end of the first excursion of X_k.

    Returns ``rho`` of shape (size, k + 1), where rho_j is the last
    excursion end of X_j not after rho_k, and ``sigma``, the first jump
    epoch (start of the first excursion of X_k).
    """
    c, lam, _ = _cp_setup(spec)
    law = spec.inputs[0].jump_law
    rng = np.random.default_rng(seed)
    cj = c[: k + 1]
    tau = np.cumsum(rng.exponential(1.0 / lam, (size, chunk)), axis=1)
    y = law.sample(rng, size * chunk).reshape(size, chunk)
    rho = np.empty((size, k + 1))
    todo = np.arange(size)
    while todo.size:
        t = tau[todo]
        post = np.cumsum(y[todo], axis=1)
        pre = post - y[todo]
        level = -cj[k] * t[:, :1]
        ret = (pre[:, 1:] - cj[k] * t[:, 1:]) <= level
        found = ret.any(axis=1)
        m = np.argmax(ret, axis=1)  # event index m-1 in 0..K-2 is the last jump before the return
        rows = np.flatnonzero(found)
        if rows.size:
            mi = m[rows]
            tl = t[rows, mi]
            xpost = post[rows, mi][:, None] - cj * tl[:, None]
            prev = pre[rows][:, :, None] - cj * t[rows][:, :, None]
            mask = np.arange(t.shape[1])[None, :] <= mi[:, None]
            prev = np.where(mask[:, :, None], prev, np.inf)
            mbefore = np.minimum(prev.min(axis=1), 0.0)
            rho[todo[rows]] = tl[:, None] + (xpost - mbefore) / cj
        # extend unfinished paths (the path is extended, never resampled)
        todo = todo[~found]
        if todo.size:
            K = tau.shape[1]
            more_t = tau[:, -1:] + np.cumsum(rng.exponential(1.0 / lam, (size, K)), axis=1)
            more_y = law.sample(rng, size * K).reshape(size, K)
            tau = np.hstack([tau, more_t])
            y = np.hstack([y, more_y])
    return {"rho": rho, "sigma": tau[:, 0].copy()}
