"""Trigger-set size calculator.

How many trigger elements are needed so that an adversary who classifies
them at chance level (probability 1/|L| per element) passes the
all-but-epsilon-fraction verification test with probability at most
2^-n_sec? Three answers are produced side by side:

* ``paper_formula``: the published closed form evaluated exactly as printed
  (its denominator is negative in the useful parameter range, so the
  absolute value is taken and the result is flagged "as-printed");
* ``hoeffding_size``: the bound rederived from Hoeffding's inequality, the
  operative recommendation;
* ``exact_minimum_size``: ground truth from the exact binomial tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SizingParams:
    """Soundness target 2^-n_sec, label-set size, verification slack."""

    n_sec: int
    num_labels: int
    epsilon: float

    def __post_init__(self) -> None:
        if self.n_sec < 0:
            raise ValueError("n_sec must be non-negative")
        if self.num_labels < 2:
            raise ValueError("num_labels must be at least 2")
        gap = 1.0 - self.epsilon - 1.0 / self.num_labels
        if gap <= 0.0:
            raise ValueError(
                "requires 1 - epsilon - 1/num_labels > 0; "
                "otherwise chance-level classification already passes"
            )


@dataclass(frozen=True)
class SizingResult:
    paper_formula_size: int
    hoeffding_size: int
    exact_minimum_size: int
    cheat_probability_at_each: dict[str, float]
    paper_formula_flag: str = "as-printed"


def paper_formula(p: SizingParams) -> int:
    """Evaluate the published size formula literally.

    Returns ceil(|n_sec * ln 2 / (1/num_labels + epsilon - 1)|). The
    denominator as printed is negative whenever the parameters are useful,
    hence the absolute value; the value is reported for traceability, not
    as the recommendation.
    """
    denom = 1.0 / p.num_labels + p.epsilon - 1.0
    if denom == 0.0:
        raise ValueError("printed formula has a zero denominator at these parameters")
    return math.ceil(abs(p.n_sec * math.log(2.0) / denom))


def hoeffding_size(p: SizingParams) -> int:
    """Smallest size T with exp(-2 T gap^2) <= 2^-n_sec, gap = 1 - eps - 1/|L|."""
    gap = 1.0 - p.epsilon - 1.0 / p.num_labels
    return math.ceil(p.n_sec * math.log(2.0) / (2.0 * gap * gap))


def exact_tail(T_size: int, match_prob: float, threshold: int) -> float:
    """Exact upper-tail binomial probability P[Bin(T_size, match_prob) >= threshold].

    Computed in the log domain, so values down to about 1e-300 come out
    non-zero instead of underflowing.
    """
    if T_size < 0 or not (0 <= threshold <= T_size):
        raise ValueError("need 0 <= threshold <= T_size")
    if threshold <= 0:
        return 1.0
    if match_prob <= 0.0:
        return 0.0
    if match_prob >= 1.0:
        return 1.0
    log_p = math.log(match_prob)
    log_q = math.log1p(-match_prob)
    lg_n = math.lgamma(T_size + 1)
    terms = []
    for j in range(threshold, T_size + 1):
        terms.append(
            lg_n - math.lgamma(j + 1) - math.lgamma(T_size - j + 1) + j * log_p + (T_size - j) * log_q
        )
    top = max(terms)
    acc = sum(math.exp(t - top) for t in terms)
    return math.exp(top + math.log(acc))


def _cheat_probability(T_size: int, p: SizingParams) -> float:
    """Tail at the verification threshold ceil((1-eps) * T_size)."""
    if T_size <= 0:
        return 1.0
    threshold = math.ceil((1.0 - p.epsilon) * T_size)
    return exact_tail(T_size, 1.0 / p.num_labels, threshold)


def exact_minimum_size(p: SizingParams) -> int:
    """Smallest T whose exact cheat probability meets the 2^-n_sec target.

    The tail is not perfectly monotone in T (the threshold moves in ceiling
    steps), so the scan is exhaustive up to the Hoeffding size, which the
    dominance property guarantees is sufficient.
    """
    if p.n_sec == 0:
        return 0
    target = 2.0 ** (-p.n_sec)
    upper = hoeffding_size(p)
    for T in range(1, upper + 1):
        if _cheat_probability(T, p) <= target:
            return T
    return upper


def compute_sizes(p: SizingParams) -> SizingResult:
    """All three sizes plus the exact cheat probability at each."""
    sizes = {
        "paper_formula": paper_formula(p),
        "hoeffding": hoeffding_size(p),
        "exact_minimum": exact_minimum_size(p),
    }
    tails = {name: _cheat_probability(size, p) for name, size in sizes.items()}
    return SizingResult(
        paper_formula_size=sizes["paper_formula"],
        hoeffding_size=sizes["hoeffding"],
        exact_minimum_size=sizes["exact_minimum"],
        cheat_probability_at_each=tails,
    )
