"""Renyi differential privacy ledger and noise calibration.

Implements the Gaussian-mechanism RDP point, additive composition, the
RDP -> (epsilon, delta) conversion, the closed-form noise calibrators for
both perturbation strategies, their numerical inverses (smallest epsilon a
given noise level certifies), and an empirical epsilon lower bound built
from attack error rates with Clopper-Pearson confidence intervals.

Calibration (strategy 1): with budget (eps, delta) and split lambda in
(0,1), the Renyi order is fixed at alpha = log(1/delta)/((1-lambda)*eps)+1
and the minimum noise levels are

    pi_min    = R * sqrt(2*k*alpha / (lambda*eps))
    gamma_min = G * sqrt(2*k*alpha / (lambda*eps))

where k = ceil(T*b/N) counts the training steps in which any fixed example
can participate. Strategy 2 replaces the participation factor with the
depth: gamma_min = (B/eta)*sqrt(2*alpha*M/(lambda*eps)) and
pi_min = a*sqrt(2*alpha*M/(lambda*eps)).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = [
    "RdpPoint",
    "DpBudget",
    "CalibrationInputs",
    "CalibrationReport",
    "Strategy2Calibration",
    "InfeasibleNoise",
    "gaussian_rdp",
    "rdp_compose",
    "rdp_to_dp",
    "calibrate_strategy1",
    "calibrate_strategy2",
    "achieved_epsilon_strategy1",
    "achieved_epsilon_strategy2",
    "achieved_epsilon_optimized_alpha",
    "clopper_pearson_upper",
    "epsilon_lower_bound_from_rates",
    "empirical_epsilon_lower_bound",
]

EPSILON_SEARCH_CAP = 1e9


class InfeasibleNoise(ValueError):
    """No epsilon below the search cap is certified by the given noise."""


@dataclass(frozen=True)
class RdpPoint:
    alpha: float
    eps_rdp: float

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("Renyi order alpha must exceed 1")
        if self.eps_rdp < 0:
            raise ValueError("eps_rdp must be nonnegative")


@dataclass(frozen=True)
class DpBudget:
    epsilon: float
    delta: float
    lambda_split: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.lambda_split < 1:
            raise ValueError("lambda_split must lie in (0, 1)")


@dataclass(frozen=True)
class CalibrationInputs:
    """Problem sizes and bounds the calibrators depend on."""

    T: int            # training iterations
    b: int            # batch size
    N: int            # training-set size
    M: int            # residual mappings
    R: float          # input norm bound
    G: float          # residual-output norm bound
    B: float = 1.0    # activation output bound (strategy 2)
    eta: float = 0.1  # clipping floor (strategy 2)
    a: float = 1.0    # head norm bound (strategy 2)

    def __post_init__(self):
        for name in ("T", "b", "N", "M", "R", "G", "B", "eta", "a"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.b > self.N:
            raise ValueError("batch size cannot exceed the training-set size")

    @property
    def participations(self):
        """ceil(T*b/N): steps in which one fixed example can take part."""
        return -(-self.T * self.b // self.N)


@dataclass
class CalibrationReport:
    strategy: int
    alpha: float
    pi_min: float
    gamma_min: float
    per_layer_epsilons: list
    whole_model_epsilon: float
    delta: float
    lambda_split: float
    inputs: CalibrationInputs

    def to_text(self):
        """Flat key = value record echoing every input, for audit trails."""
        lines = [f"strategy = {self.strategy}"]
        for name in ("T", "b", "N", "M", "R", "G", "B", "eta", "a"):
            lines.append(f"{name} = {getattr(self.inputs, name)!r}")
        lines.append(f"participations = {self.inputs.participations}")
        lines.append(f"epsilon = {self.whole_model_epsilon!r}")
        lines.append(f"delta = {self.delta!r}")
        lines.append(f"lambda = {self.lambda_split!r}")
        lines.append(f"alpha = {self.alpha!r}")
        lines.append(f"pi_min = {self.pi_min!r}")
        lines.append(f"gamma_min = {self.gamma_min!r}")
        for i, eps_i in self.per_layer_epsilons:
            lines.append(f"layer_epsilon_{i:02d} = {eps_i!r}")
        return "\n".join(lines) + "\n"


@dataclass
class Strategy2Calibration:
    gamma_min: float
    pi_min: float
    alpha: float


def gaussian_rdp(alpha, sensitivity, sigma):
    """RDP of the Gaussian mechanism: eps = alpha * sensitivity^2 / (2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    return RdpPoint(alpha, alpha * sensitivity ** 2 / (2.0 * sigma ** 2))


def rdp_compose(points):
    """Sequential composition: same order, epsilons add."""
    points = list(points)
    if not points:
        raise ValueError("nothing to compose")
    alpha = points[0].alpha
    for p in points[1:]:
        if p.alpha != alpha:
            raise ValueError("can only compose RDP points of equal order")
    return RdpPoint(alpha, sum(p.eps_rdp for p in points))


def rdp_to_dp(point, delta):
    """Convert (alpha, eps_rdp) to epsilon at the given delta."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return point.eps_rdp + math.log(1.0 / delta) / (point.alpha - 1.0)


def _theorem_alpha(epsilon, delta, lam):
    return math.log(1.0 / delta) / ((1.0 - lam) * epsilon) + 1.0


def calibrate_strategy1(budget, inputs):
    """Minimum noise (pi_min, gamma_min) certifying the whole-model budget."""
    eps, delta, lam = budget.epsilon, budget.delta, budget.lambda_split
    alpha = _theorem_alpha(eps, delta, lam)
    k = inputs.participations
    root = math.sqrt(2.0 * k * alpha / (lam * eps))
    per_layer = [(i, (lam / (i + 1.0) + (1.0 - lam)) * eps) for i in range(inputs.M + 1)]
    return CalibrationReport(
        strategy=1,
        alpha=alpha,
        pi_min=inputs.R * root,
        gamma_min=inputs.G * root,
        per_layer_epsilons=per_layer,
        whole_model_epsilon=eps,
        delta=delta,
        lambda_split=lam,
        inputs=inputs,
    )


def calibrate_strategy2(budget, inputs):
    """Minimum noise for the multiplicative strategy's black-box guarantee."""
    eps, delta, lam = budget.epsilon, budget.delta, budget.lambda_split
    alpha = _theorem_alpha(eps, delta, lam)
    root = math.sqrt(2.0 * alpha * inputs.M / (lam * eps))
    return Strategy2Calibration(
        gamma_min=(inputs.B / inputs.eta) * root,
        pi_min=inputs.a * root,
        alpha=alpha,
    )


def _smallest_feasible_epsilon(feasible, rel_tol=1e-9):
    """Bisect for the smallest epsilon with feasible(eps) true.

    feasible must be monotone (false below the threshold, true above).
    """
    hi = 1e-12
    while not feasible(hi):
        hi *= 2.0
        if hi > EPSILON_SEARCH_CAP:
            raise InfeasibleNoise(f"no feasible epsilon below {EPSILON_SEARCH_CAP:g}")
    lo = hi / 2.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def achieved_epsilon_strategy1(gamma, pi, delta, lambda_split, inputs):
    """Smallest epsilon whose strategy-1 calibration the noise (gamma, pi) meets."""
    if gamma <= 0 or pi <= 0:
        raise ValueError("gamma and pi must be positive")

    def feasible(eps):
        rep = calibrate_strategy1(DpBudget(eps, delta, lambda_split), inputs)
        return rep.gamma_min <= gamma and rep.pi_min <= pi

    return _smallest_feasible_epsilon(feasible)


def achieved_epsilon_strategy2(gamma, pi, delta, lambda_split, inputs):
    """Smallest epsilon whose strategy-2 calibration the noise (gamma, pi) meets."""
    if gamma <= 0 or pi <= 0:
        raise ValueError("gamma and pi must be positive")

    def feasible(eps):
        cal = calibrate_strategy2(DpBudget(eps, delta, lambda_split), inputs)
        return cal.gamma_min <= gamma and cal.pi_min <= pi

    return _smallest_feasible_epsilon(feasible)


def achieved_epsilon_optimized_alpha(gamma, pi, delta, inputs, strategy=1, alpha_grid=None):
    """Extension: epsilon from the best Renyi order on a grid over (1, 256].

    Instead of the order fixed by the lambda split, scan alpha and convert
    the binding noise constraint directly; reports the tighter epsilon.
    Not part of the calibration theorems; clearly an add-on.
    """
    if gamma <= 0 or pi <= 0:
        raise ValueError("gamma and pi must be positive")
    if alpha_grid is None:
        alpha_grid = 1.0 + np.logspace(-6, np.log10(255.0), 512)
    if strategy == 1:
        k = inputs.participations
        rdp_rate = 2.0 * k * max(inputs.R ** 2 / pi ** 2, inputs.G ** 2 / gamma ** 2)
    elif strategy == 2:
        rdp_rate = 2.0 * inputs.M * max((inputs.B / (inputs.eta * gamma)) ** 2,
                                        (inputs.a / pi) ** 2)
    else:
        raise ValueError("strategy must be 1 or 2")
    alphas = np.asarray(alpha_grid, dtype=float)
    eps = alphas * rdp_rate + math.log(1.0 / delta) / (alphas - 1.0)
    return float(eps.min())


# ---------------------------------------------------------------------------
# empirical lower bound
# ---------------------------------------------------------------------------

def clopper_pearson_upper(successes, trials, confidence=0.95):
    """One-sided upper confidence bound for a binomial proportion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if successes == trials:
        return 1.0
    return float(stats.beta.ppf(confidence, successes + 1, trials - successes))


def epsilon_lower_bound_from_rates(fpr_hi, fnr_hi, delta):
    """max(0, log((1-delta-FNR)/FPR), log((1-delta-FPR)/FNR)); 0 when undefined."""
    candidates = [0.0]
    for num, den in (((1.0 - delta - fnr_hi), fpr_hi), ((1.0 - delta - fpr_hi), fnr_hi)):
        if num > 0 and den > 0:
            candidates.append(math.log(num / den))
    return max(candidates)


def empirical_epsilon_lower_bound(false_positives, false_negatives,
                                  negative_trials, positive_trials,
                                  delta, confidence=0.95):
    """Audit-style epsilon lower bound from attack error counts.

    Upper-bounds the attack's FPR and FNR with one-sided Clopper-Pearson
    intervals at the given confidence, then applies the distinguishing
    bound. A random-guess attack certifies nothing (returns 0).
    """
    fpr_hi = clopper_pearson_upper(false_positives, negative_trials, confidence)
    fnr_hi = clopper_pearson_upper(false_negatives, positive_trials, confidence)
    return epsilon_lower_bound_from_rates(fpr_hi, fnr_hi, delta)
