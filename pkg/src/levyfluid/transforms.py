"""Closed-form joint Laplace transforms for tandem and single-input networks.

Stations are 0-based throughout.  Every formula is assembled from the
fluctuation identity

    E exp(-a G_i - b Xbar_i) = -E X_i(1) (Phi_i(a) - b) / (a - psi_i(b)),

evaluated with analytic limits at its removable singularity and with
symbolic infinite arguments (an infinite argument on either G or Xbar
selects the event {Xbar_i = 0}).
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .levy import LaplaceExponent, exponents
from .model import PreconditionError, TandemDerived, TreeNetworkSpec, derive_tandem, validate_network

SINGULAR_WINDOW = 1e-8
FORM_TOL = 1e-10


@dataclass
class _Context:
    report: object
    exps: list
    td: TandemDerived | None


_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _ctx(spec: TreeNetworkSpec) -> _Context:
    c = _cache.get(spec)
    if c is None:
        rep = validate_network(spec)
        td = derive_tandem(spec) if rep.is_tandem else None
        c = _Context(rep, exponents(spec), td)
        _cache[spec] = c
    return c


def _vec(x, n, name):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise ValueError(f"{name} must have {n} entries, got {x.size}")
    if np.any(np.isnan(x)):
        raise ValueError(f"{name} contains NaN")
    return x


def _nonneg(x, name):
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"{name} must be nonnegative, got {x}")
    return x


# --------------------------------------------------------------------------
# one-dimensional building blocks
# --------------------------------------------------------------------------

def fluctuation_identity(e: LaplaceExponent, alpha: float, beta: float) -> float:
    """E exp(-alpha G - beta Xbar) for a spectrally positive component drifting to -inf."""
    alpha, beta = float(alpha), float(beta)
    if alpha < 0 or beta < 0 or np.isnan(alpha) or np.isnan(beta):
        raise ValueError(f"arguments must be nonnegative, got alpha={alpha}, beta={beta}")
    if np.isinf(alpha) or np.isinf(beta):
        return e.prob_zero_max
    m = e.mean
    if m >= 0:
        e._require_drift()
    if alpha == 0.0 and beta == 0.0:
        return 1.0
    pa = e.phi(alpha)
    if abs(beta - pa) < SINGULAR_WINDOW:
        return -m / e.dpsi(0.5 * (beta + pa))
    return -m * (pa - beta) / (alpha - e.psi(beta))


def busy_periods(e: LaplaceExponent, alpha: float, beta: float):
    """(E exp(-alpha B - beta D), E exp(-alpha V)) for the running busy period V = B + D."""
    _nonneg([alpha, beta], "alpha, beta")
    m = e.mean
    e._require_drift()
    V = -m * float(e.dphi(alpha))
    if abs(alpha - beta) < SINGULAR_WINDOW:
        joint = -m * float(e.dphi(0.5 * (alpha + beta)))
    else:
        joint = -m * (e.phi(alpha) - e.phi(beta)) / (alpha - beta)
    return joint, V


# --------------------------------------------------------------------------
# quasi-product transforms of (Xbar, G)
# --------------------------------------------------------------------------

def _theta_upsilon(spec, td, l, b):
    """theta^Upsilon_l(b) with 0 * inf = 0 for a vanishing drift correction."""
    u = td.upsilon_drift[l]
    lin = 0.0 if (b == 0 or u == 0) else u * b
    return float(spec.inputs[l].cumulant(b)) + lin


def _require_tandem(spec, what):
    c = _ctx(spec)
    if c.td is None:
        raise PreconditionError(f"{what} needs tandem routing (p_(i,i+1) > 0 only)")
    return c


def _quasi_product(spec, alpha, beta):
    c = _ctx(spec)
    td, exps, n = c.td, c.exps, spec.n
    Kp = td.Kpow
    inner = np.array([Kp[l, l:] @ beta[l:] for l in range(n)])  # sum_{k>=l} K_l^k beta_k
    theta = np.array([0.0] + [_theta_upsilon(spec, td, l, inner[l]) for l in range(1, n)])
    val = 1.0
    for j in range(n - 1):
        tsum = theta[j + 1:].sum()
        a_num = alpha[j:].sum() + tsum
        a_den = alpha[j + 1:].sum() + tsum
        b_num = Kp[j, j:] @ beta[j:]
        b_den = Kp[j, j + 1:] @ beta[j + 1:]
        den = fluctuation_identity(exps[j], a_den, b_den)
        if den == 0:
            raise ZeroDivisionError(f"singular factor at station {j}")
        val *= fluctuation_identity(exps[j], a_num, b_num) / den
    return val * fluctuation_identity(exps[n - 1], alpha[n - 1], beta[n - 1])


def quasi_product_XG(spec: TreeNetworkSpec, alpha, beta) -> float:
    """E exp(-<alpha, G> - <beta, Xbar>) under the tandem chain structure."""
    _require_tandem(spec, "quasi_product_XG")
    alpha = _nonneg(_vec(alpha, spec.n, "alpha"), "alpha")
    beta = _nonneg(_vec(beta, spec.n, "beta"), "beta")
    return _quasi_product(spec, alpha, beta)


def conditioned_XG(spec: TreeNetworkSpec, k: int, alpha, beta) -> float:
    """E[exp(-<alpha, G> - <beta, Xbar>) | Xbar_k = 0]; alpha pairs with G, beta with Xbar."""
    c = _require_tandem(spec, "conditioned_XG")
    n = spec.n
    if not 0 <= k < n:
        raise ValueError(f"k must be in 0..{n - 1}")
    alpha = _nonneg(_vec(alpha, n, "alpha"), "alpha")
    beta = _nonneg(_vec(beta, n, "beta"), "beta")
    td, exps, Kp = c.td, c.exps, c.td.Kpow
    inner = np.array([Kp[l, l:] @ beta[l:] for l in range(n)])
    theta = np.array([0.0] + [_theta_upsilon(spec, td, l, inner[l]) for l in range(1, n)])
    val = 1.0
    for j in range(k, n - 1):
        a_sum = alpha[j + 1:].sum()
        num = fluctuation_identity(exps[j + 1], a_sum + theta[j + 2:].sum(), Kp[j + 1, j + 1:] @ beta[j + 1:])
        den = fluctuation_identity(exps[j], a_sum + theta[j + 1:].sum(), Kp[j, j + 1:] @ beta[j + 1:])
        val *= num / den
    return val


# --------------------------------------------------------------------------
# tandem buffer contents and busy ages
# --------------------------------------------------------------------------

def _check_tandem_formulas(spec):
    c = _ctx(spec)
    rep = c.report
    if not rep.tandem_formulas:
        raise PreconditionError(f"tandem formulas need T1-T6 on a tandem; violated: {rep.violated or ['tandem']}")
    return c


def _wb_shift(spec, td, omega, j):
    """sum_{l>j} [theta^J_l(omega_l) + (p r_{l-1} - r_l) omega_l] with 0 * inf = 0."""
    s = 0.0
    for l in range(j + 1, spec.n):
        u = td.upsilon_drift[l]
        w = omega[l]
        s += float(spec.inputs[l].cumulant(w)) + (0.0 if (w == 0 or u == 0) else u * w)
    return s


def _wb_first(spec, c, omega, beta):
    td, exps, n = c.td, c.exps, spec.n
    val = 1.0
    for j in range(n - 1):
        S = _wb_shift(spec, td, omega, j)
        num = fluctuation_identity(exps[j], S + beta[j:].sum(), omega[j])
        den = fluctuation_identity(exps[j], S + beta[j + 1:].sum(), td.K[j + 1] * omega[j + 1])
        if den == 0:
            raise ZeroDivisionError(f"singular factor at station {j}")
        val *= num / den
    return val * fluctuation_identity(exps[n - 1], beta[n - 1], omega[n - 1])


def _pair(e, a, b):
    """(Phi(a) - b) / (a - psi(b)), with its limit 1/psi'(b) on the curve a = psi(b)."""
    if a == 0 and b == 0:
        return 1.0 / e.dpsi(0.0)
    pa = e.phi(a)
    if abs(pa - b) < SINGULAR_WINDOW:
        return 1.0 / e.dpsi(0.5 * (pa + b))
    return (pa - b) / (a - e.psi(b))


def _wb_second(spec, c, omega, beta):
    """Phi/psi expansion: products of (Phi - omega) ratios and (a - psi) ratios."""
    td, exps, n = c.td, c.exps, spec.n
    last = exps[n - 1]
    val = -last.mean * _pair(last, beta[n - 1], omega[n - 1])
    phis = 1.0
    psis = 1.0
    for j in range(n - 1):
        e = exps[j]
        S = _wb_shift(spec, td, omega, j)
        a_num, a_den = S + beta[j:].sum(), S + beta[j + 1:].sum()
        b_num, b_den = omega[j], td.K[j + 1] * omega[j + 1]
        p_num, p_den = e.phi(a_num), e.phi(a_den)
        if abs(p_num - b_num) < SINGULAR_WINDOW or abs(p_den - b_den) < SINGULAR_WINDOW or \
                (a_num == 0 and b_num == 0) or (a_den == 0 and b_den == 0):
            val *= _pair(e, a_num, b_num) / _pair(e, a_den, b_den)
            continue
        phis *= (p_num - b_num) / (p_den - b_den)
        psis *= (a_den - e.psi(b_den)) / (a_num - e.psi(b_num))
    return val * phis * psis


def tandem_WB(spec: TreeNetworkSpec, omega, beta, form: str = "first", crosscheck: bool = True) -> float:
    """Stationary E exp(-<omega, W> - <beta, B>) of a tandem network.

    ``form='first'`` composes ratios of fluctuation identities, ``'second'``
    uses the Phi/psi expansion.  With ``crosscheck`` both are evaluated (for
    finite arguments) and must agree to 1e-10.
    """
    c = _check_tandem_formulas(spec)
    omega = _nonneg(_vec(omega, spec.n, "omega"), "omega")
    beta = _nonneg(_vec(beta, spec.n, "beta"), "beta")
    finite = np.all(np.isfinite(omega)) and np.all(np.isfinite(beta))
    if form == "second":
        if not finite:
            raise ValueError("the Phi/psi form takes finite arguments only")
        return _wb_second(spec, c, omega, beta)
    if form != "first":
        raise ValueError(f"unknown form {form!r}")
    v1 = _wb_first(spec, c, omega, beta)
    if crosscheck and finite:
        v2 = _wb_second(spec, c, omega, beta)
        if abs(v1 - v2) > FORM_TOL * max(1.0, abs(v1)):
            raise ArithmeticError(f"tandem forms disagree: {v1!r} vs {v2!r}")
    return v1


def tandem_WB_via_XG(spec: TreeNetworkSpec, omega, beta) -> float:
    """Same transform routed through the (Xbar, G) quasi-product at (beta, (I - P) omega)."""
    _check_tandem_formulas(spec)
    omega = _nonneg(_vec(omega, spec.n, "omega"), "omega")
    beta = _nonneg(_vec(beta, spec.n, "beta"), "beta")
    wt = (np.eye(spec.n) - spec.P) @ omega  # may be negative; effective arguments are not
    return _quasi_product(spec, beta, wt)


# --------------------------------------------------------------------------
# single compound Poisson input
# --------------------------------------------------------------------------

def _check_single_cp(spec):
    c = _ctx(spec)
    if not c.report.single_cp:
        raise PreconditionError("needs a unit tandem with a single compound Poisson root input (T7-T8)")
    return c


def idle_probability(spec: TreeNetworkSpec, i: int) -> float:
    """P(W_i = 0) = E X_i(1) / (d - r_i)."""
    c = _check_single_cp(spec)
    return float(c.exps[i].mean / (c.td.d - spec.r[i]))


def _ratio_on_curve(ei, eprev, omega, beta, a):
    """(Phi_i(beta) - omega) / (Phi_{i-1}(a) - omega) with a = beta + (r_{i-1} - r_i) omega."""
    pp = eprev.phi(a)
    if abs(pp - omega) < SINGULAR_WINDOW:
        return eprev.dpsi(omega) / ei.dpsi(omega)
    return (ei.phi(beta) - omega) / (pp - omega)


def single_cp_joint(spec: TreeNetworkSpec, i: int, omega: float, beta: float) -> float:
    """E exp(-omega W_i - beta B_i) under T7-T8."""
    c = _check_single_cp(spec)
    _nonneg([omega, beta], "omega, beta")
    ei = c.exps[i]
    if i == 0:
        return fluctuation_identity(ei, beta, omega)
    ep = c.exps[i - 1]
    a = beta + (spec.r[i - 1] - spec.r[i]) * omega
    if a == 0:
        return 1.0
    R = _ratio_on_curve(ei, ep, omega, beta, a)
    return float(-ei.mean * R * ep.phi(a) / a)


def single_cp_upstream_empty(spec: TreeNetworkSpec, i: int, omega: float, beta: float,
                             printed_sign: bool = False) -> float:
    """E[exp(-omega W_i - beta B_i); W_{i-1} = 0] under T7-T8, for i >= 1.

    The prefactor is E X_i(1) / (d - r_{i-1}) > 0; ``printed_sign`` flips it
    to reproduce the negative variant.
    """
    c = _check_single_cp(spec)
    if i < 1:
        raise ValueError("the upstream-empty transform needs a feeding station (i >= 1)")
    _nonneg([omega, beta], "omega, beta")
    ei, ep = c.exps[i], c.exps[i - 1]
    a = beta + (spec.r[i - 1] - spec.r[i]) * omega
    if a == 0:
        R = ep.mean / ei.mean
    else:
        R = _ratio_on_curve(ei, ep, omega, beta, a)
    pref = ei.mean / (c.td.d - spec.r[i - 1])
    return float((-pref if printed_sign else pref) * R)


def single_cp(spec: TreeNetworkSpec, i: int, omega: float, beta: float, part_ii: bool = True):
    """(joint transform, P(W_i = 0), upstream-empty transform or None when part_ii is False)."""
    joint = single_cp_joint(spec, i, omega, beta)
    p0 = idle_probability(spec, i)
    up = single_cp_upstream_empty(spec, i, omega, beta) if part_ii else None
    return joint, p0, up


def psi_gap(spec: TreeNetworkSpec, j: int, k: int, omega: float) -> float:
    """psi_j(omega) - psi_k(omega) - (r_j - r_k) omega; zero under T7-T8."""
    c = _ctx(spec)
    return c.exps[j].psi(omega) - c.exps[k].psi(omega) - (spec.r[j] - spec.r[k]) * omega


# --------------------------------------------------------------------------
# idle periods
# --------------------------------------------------------------------------

def idle_vector(spec: TreeNetworkSpec, gamma, printed_index: bool = False) -> float:
    """E exp(-<gamma, I>) under T7-T8."""
    from .excursions import H_transform_conditioned  # local: excursions imports this module

    c = _check_single_cp(spec)
    n = spec.n
    gamma = _nonneg(_vec(gamma, n, "gamma"), "gamma")
    if np.any(np.diff(c.td.c) >= 0):
        raise PreconditionError("c_j must decrease strictly")
    total = 1.0
    for k in range(n):
        if gamma[k] == 0:
            continue
        g_without = np.concatenate([gamma[:k], [0.0]])
        term = H_transform_conditioned(spec, k, g_without, printed_index) - \
            H_transform_conditioned(spec, k, gamma[:k + 1], printed_index)
        total -= idle_probability(spec, k) * term
    return total


# --------------------------------------------------------------------------
# priority system
# --------------------------------------------------------------------------

def priority_corrections(spec: TreeNetworkSpec, omega, beta) -> np.ndarray:
    """Correction terms j = 1..n-1 (0-based) of the priority transform."""
    c = _ctx(spec)
    n = spec.n
    rep = c.report
    if c.td is None or not np.all(c.td.K[1:] == 1.0) or np.ptp(spec.r) != 0:
        raise PreconditionError("priority mapping needs a unit tandem with a common drain rate")
    if not (rep.checks["T2"] and rep.checks["T4"]):
        raise PreconditionError(f"priority system violates P2/P3: {rep.violated}")
    if spec.inputs[0].kind == "brownian":
        raise PreconditionError("correction terms need P(Xbar_1 = 0) > 0; a Brownian class 1 is unsupported")
    out = np.zeros(n)
    for j in range(1, n):
        w = np.concatenate([omega[:j], np.full(n - j, np.inf)])
        b0 = np.concatenate([beta[:j], np.zeros(n - j)])
        b1 = np.concatenate([beta[:j + 1], np.zeros(n - j - 1)])
        out[j] = _wb_first(spec, c, w, b0) - _wb_first(spec, c, w, b1)
    return out


def priority_WE(spec: TreeNetworkSpec, omega, beta) -> float:
    """E exp(-<omega, W> - <beta, E>) for the preemptive priority station mapped to a tandem."""
    c = _ctx(spec)
    omega = _nonneg(_vec(omega, spec.n, "omega"), "omega")
    beta = _nonneg(_vec(beta, spec.n, "beta"), "beta")
    corr = priority_corrections(spec, omega, beta)
    return _wb_first(spec, c, omega, beta) + corr.sum()
