"""Simulated selection behaviours used for automated benchmarking.

Each behaviour picks one of the p presented choices. The benchmark layer
supplies the true function values; the optimisation loop itself never sees
them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class BehaviorKind(str, Enum):
    EXPERT = "expert"
    ADVERSARIAL = "adversarial"
    TRUSTING = "trusting"
    PROB_BEST = "pbest"


@dataclass(frozen=True)
class Behavior:
    kind: BehaviorKind
    p_best: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind is BehaviorKind.PROB_BEST:
            if self.p_best is None or not 0.0 <= self.p_best <= 1.0:
                raise ValueError("pbest behaviour needs p_best in [0, 1]")
        elif self.p_best is not None:
            raise ValueError(f"{self.kind.value} takes no p_best")

    def label(self) -> str:
        if self.kind is BehaviorKind.PROB_BEST:
            return f"pbest:{self.p_best:g}"
        return self.kind.value


def parse_behavior(text: str) -> Behavior:
    """Parse a CLI/config behaviour string: expert, adversarial, trusting,
    or pbest:<probability>."""
    text = text.strip().lower()
    if text.startswith("pbest:"):
        try:
            q = float(text.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad pbest probability in {text!r}") from None
        return Behavior(BehaviorKind.PROB_BEST, p_best=q)
    try:
        return Behavior(BehaviorKind(text))
    except ValueError:
        raise ValueError(
            f"unknown behaviour {text!r}; expected expert, adversarial, "
            "trusting or pbest:<q>"
        ) from None


def select(behavior: Behavior, choices, true_values, rng: np.random.Generator) -> int:
    """Index of the selected choice. Ties break to the lowest index.

    The probabilistic practitioner picks the true-best choice with
    probability p_best and otherwise uniformly among the other p-1, so the
    best-choice probability is exactly p_best (and p_best = 1/p is the
    fully uniform selector).
    """
    true_values = np.asarray(true_values, dtype=float)
    p = len(choices.choices)
    if true_values.size != p:
        raise ValueError("need one true value per choice")
    if behavior.kind is BehaviorKind.EXPERT:
        return int(np.argmax(true_values))
    if behavior.kind is BehaviorKind.ADVERSARIAL:
        return int(np.argmin(true_values))
    if behavior.kind is BehaviorKind.TRUSTING:
        utilities = np.array([c.utility for c in choices.choices])
        return int(np.argmax(utilities))
    best = int(np.argmax(true_values))
    if rng.random() < behavior.p_best:
        return best
    other = int(rng.integers(0, p - 1))
    return other if other < best else other + 1
