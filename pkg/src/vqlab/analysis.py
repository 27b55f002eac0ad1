"""Closed-form variance-reduction analysis of the scaled-queue estimator.

The estimator measures an exceedance probability u in the scaled queue and
maps it to the real tail P = u ** (alpha ** 2).  Under a binomial model of
the per-window counters, the squared-COV ratio eta of the mapped estimator
to a direct measurement of P factorizes into a u-dependent cost and a
P-dependent gain; minimizing the u factor gives the optimal operating
point u* ~ 0.2032, independent of P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence


@dataclass(frozen=True)
class EtaPoint:
    alpha: float
    tail_p: float
    eta: float


def _check_prob(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name}={value} must be inside (0, 1)")


def eta_of_alpha(alpha: float, tail_p: float) -> float:
    """Variance ratio eta(alpha, P) = a^4 (P^(1-1/a^2) - P) / (1 - P)."""
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    _check_prob("tail_p", tail_p)
    exponent = 1.0 - 1.0 / (alpha * alpha)
    # exp/log form keeps tiny P^exponent out of pow underflow paths
    p_pow = math.exp(exponent * math.log(tail_p))
    return alpha ** 4 * (p_pow - tail_p) / (1.0 - tail_p)


def eta_u_factor(u: float) -> float:
    """The operating-point cost (1 - u) / (u ln^2 u); minimized at u*."""
    _check_prob("u", u)
    log_u = math.log(u)
    return (1.0 - u) / (u * log_u * log_u)


def eta_of_probs(u: float, tail_p: float) -> float:
    """eta written as the product of a u-only and a P-only factor."""
    _check_prob("u", u)
    _check_prob("tail_p", tail_p)
    log_p = math.log(tail_p)
    return eta_u_factor(u) * tail_p * log_p * log_p / (1.0 - tail_p)


def golden_section_min(f: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-7) -> float:
    """Minimizer of a unimodal f on [a, b] by golden-section search."""
    gr = (1.0 + math.sqrt(5.0)) / 2.0
    c = b - (b - a) / gr
    d = a + (b - a) / gr
    fc = f(c)
    fd = f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) / gr
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) / gr
            fd = f(d)
    return (a + b) / 2.0


@lru_cache(maxsize=1)
def optimal_u() -> float:
    """Scaled-queue exceedance level minimizing the estimator variance."""
    return golden_section_min(eta_u_factor, 1e-6, 1.0 - 1e-6, tol=1e-7)


def eta_min(tail_p: float) -> float:
    """Best achievable eta for a given real tail probability."""
    _check_prob("tail_p", tail_p)
    return eta_of_probs(optimal_u(), tail_p)


def phi(tail_p: float, reference_p: float = 0.01) -> float:
    """Squared-COV ratio of directly measuring ``reference_p`` vs the tail."""
    _check_prob("tail_p", tail_p)
    _check_prob("reference_p", reference_p)
    return ((1.0 - reference_p) / reference_p) * (tail_p / (1.0 - tail_p))


def binomial_var(p: float, n_trials: int) -> float:
    """Variance p (1 - p) / n of a binomial sample proportion."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    return p * (1.0 - p) / n_trials


def delta_var_mapped(u: float, alpha: float, n_trials: int) -> float:
    """Linearized variance of the mapped estimator (proportion ** alpha^2)."""
    _check_prob("u", u)
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    scale = alpha ** 4 * math.exp(2.0 * (alpha * alpha - 1.0) * math.log(u))
    return binomial_var(u, n_trials) * scale


def eta_vs_alpha_curve(tail_ps: Sequence[float],
                       alphas: Sequence[float]) -> list[EtaPoint]:
    """Grid of eta(alpha, P) values (one curve per tail probability)."""
    return [EtaPoint(alpha=a, tail_p=p, eta=eta_of_alpha(a, p))
            for p in tail_ps for a in alphas]


def eta_min_phi_curve(tail_ps: Sequence[float]) -> list[tuple[float, float, float]]:
    """(tail_p, eta_min, phi) rows for the minimal-eta reference plot."""
    return [(p, eta_min(p), phi(p)) for p in tail_ps]


def fixed_alpha_ratio_curve(tail_ps: Sequence[float],
                            alphas_fixed: Sequence[float]
                            ) -> list[tuple[float, float, float]]:
    """(tail_p, alpha, eta / eta_min) rows for fixed scaling factors."""
    return [(p, a, eta_of_alpha(a, p) / eta_min(p))
            for a in alphas_fixed for p in tail_ps]
