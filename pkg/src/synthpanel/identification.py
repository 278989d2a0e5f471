"""Identification oracle over ground-truth compositions.

Given the true category distributions of the target and a donor set, this
module extracts the set of categories on which they differ, checks the
two identifying conditions (enough donors; donor support covers the
target's), and solves the linear system whose solution is a single weight
vector valid at every period. Everything here operates on exact
compositions, never on estimated panels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError
from .microsim import GroupComposition, SimulatedStudy, expected_outcome

__all__ = [
    "InvariantSetReport",
    "OracleWeights",
    "minimal_invariant_set",
    "solve_oracle_weights",
    "verify_identification",
    "report_to_json",
    "weights_to_json",
]


@dataclass(frozen=True, eq=False)
class InvariantSetReport:
    """Categories that differ between target and donors, plus condition checks.

    ``a3_holds`` iff the donor count is at least the cardinality of the
    differing set; ``a4_holds`` iff every category the target puts mass on
    is also carried by some donor. ``per_category_max_gap[k]`` is the
    largest |P_j(k) - P_target(k)| over the selected groups.
    """

    S_indices: tuple[int, ...]
    S_cardinality: int
    donor_count: int
    a3_holds: bool
    a4_holds: bool
    per_category_max_gap: np.ndarray

    def __post_init__(self):
        gaps = np.array(self.per_category_max_gap, dtype=float)
        gaps.setflags(write=False)
        object.__setattr__(self, "per_category_max_gap", gaps)
        object.__setattr__(self, "S_indices", tuple(int(i) for i in self.S_indices))


@dataclass(frozen=True, eq=False)
class OracleWeights:
    """Minimum-norm solution of the composition-matching system.

    ``exists`` reports in-band whether the system admits a solution at the
    given tolerance; the weights are unrestricted in sign.
    """

    donor_indices: tuple[int, ...]
    beta: np.ndarray
    residual_norm: float
    exists: bool

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "donor_indices", tuple(int(j) for j in self.donor_indices))


def _validate_selection(
    compositions: Sequence[GroupComposition], target: int, donors: Sequence[int]
) -> list[int]:
    donors = [int(j) for j in donors]
    if not donors:
        raise UsageError("donor set must not be empty")
    k = compositions[0].n_categories
    for comp in compositions:
        if comp.n_categories != k:
            raise UsageError("compositions disagree on the number of categories")
    for j in [target, *donors]:
        if not 0 <= j < len(compositions):
            raise UsageError(f"group index {j} out of range")
    if target in donors:
        raise UsageError("the target cannot be its own donor")
    if len(set(donors)) != len(donors):
        raise UsageError("donor indices must be distinct")
    return donors


def minimal_invariant_set(
    compositions: Sequence[GroupComposition],
    target: int,
    donors: Sequence[int],
    tol: float = 1e-9,
) -> InvariantSetReport:
    """Categories where any selected group deviates from the target by > tol."""
    if tol <= 0:
        raise UsageError("tolerance must be positive")
    donors = _validate_selection(compositions, target, donors)
    target_probs = compositions[target].probs
    donor_probs = np.array([compositions[j].probs for j in donors])
    gaps = np.abs(donor_probs - target_probs).max(axis=0)
    s_indices = tuple(int(i) for i in np.nonzero(gaps > tol)[0])
    a4 = all(
        donor_probs[:, k].max() > tol for k in range(target_probs.size) if target_probs[k] > tol
    )
    return InvariantSetReport(
        S_indices=s_indices,
        S_cardinality=len(s_indices),
        donor_count=len(donors),
        a3_holds=len(donors) >= len(s_indices),
        a4_holds=a4,
        per_category_max_gap=gaps,
    )


def solve_oracle_weights(
    compositions: Sequence[GroupComposition],
    target: int,
    donors: Sequence[int],
    S: Sequence[int],
    tol: float = 1e-9,
) -> OracleWeights:
    """Minimum-norm least-squares weights matching the target on S.

    With an empty S every selected group already matches the target, so the
    first donor alone (weight 1) is returned. Infeasibility is in-band:
    ``exists`` is False when the residual exceeds ``tol``.
    """
    if tol <= 0:
        raise UsageError("tolerance must be positive")
    donors = _validate_selection(compositions, target, donors)
    s = sorted(int(i) for i in S)
    if any(not 0 <= i < compositions[0].n_categories for i in s):
        raise UsageError("category index out of range in S")
    if not s:
        beta = np.zeros(len(donors))
        beta[0] = 1.0
        return OracleWeights(donor_indices=tuple(donors), beta=beta, residual_norm=0.0, exists=True)
    matrix = np.array([[compositions[j].probs[i] for j in donors] for i in s])
    rhs = np.array([compositions[target].probs[i] for i in s])
    beta = np.linalg.lstsq(matrix, rhs, rcond=None)[0]
    residual = float(np.linalg.norm(matrix @ beta - rhs))
    return OracleWeights(
        donor_indices=tuple(donors), beta=beta, residual_norm=residual, exists=residual <= tol
    )


def verify_identification(study: SimulatedStudy, weights: OracleWeights, tol: float = 1e-8) -> bool:
    """Check the weighted-donor identity on noiseless expected outcomes.

    True iff the target's expected control outcome equals the weighted
    combination of the donors' at every period of the study.
    """
    if tol <= 0:
        raise UsageError("tolerance must be positive")
    target = study.panel.target_index
    for t in range(1, study.config.T + 1):
        lhs = expected_outcome(study.compositions[target], study.functions, t)
        rhs = sum(
            float(b) * expected_outcome(study.compositions[j], study.functions, t)
            for j, b in zip(weights.donor_indices, weights.beta)
        )
        if abs(lhs - rhs) > tol:
            return False
    return True


def report_to_json(report: InvariantSetReport) -> dict:
    return {
        "S_indices": list(report.S_indices),
        "S_cardinality": report.S_cardinality,
        "donor_count": report.donor_count,
        "a3_holds": report.a3_holds,
        "a4_holds": report.a4_holds,
        "per_category_max_gap": [float(g) for g in report.per_category_max_gap],
    }


def weights_to_json(weights: OracleWeights) -> dict:
    return {
        "donor_indices": list(weights.donor_indices),
        "beta": [float(b) for b in weights.beta],
        "residual_norm": weights.residual_norm,
        "exists": weights.exists,
    }
