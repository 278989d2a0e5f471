"""Panel-data model: validation, CSV ingestion, and group aggregation.

The canonical object is :class:`PanelData`, a complete J x T matrix of
group-level outcomes with a designated target group and a count of
pre-intervention periods. All types are immutable after construction and
all operations are pure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import DataValidationError, UsageError

__all__ = [
    "PanelData",
    "PanelView",
    "AuxMatrix",
    "EffectEstimate",
    "from_csv",
    "to_csv",
    "aux_from_csv",
    "aux_to_csv",
    "aggregate_groups",
    "select_groups",
    "split_pre_post",
    "standardize_rows",
    "destandardize_rows",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PanelData:
    """Observed group-level outcomes for J groups over T ordered periods.

    ``outcomes[j, t]`` is the outcome of group ``j`` at the t-th period.
    ``intervention_time`` counts the pre-intervention periods, so periods
    with index ``< intervention_time`` are "pre" and the rest are "post".
    ``populations`` is an optional side table used only by aggregation.
    """

    outcomes: np.ndarray
    group_labels: tuple[str, ...]
    time_labels: tuple[int, ...]
    target_index: int
    intervention_time: int
    populations: Mapping[str, float] | None = field(default=None)

    def __post_init__(self):
        outcomes = _frozen_array(self.outcomes)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "group_labels", tuple(self.group_labels))
        object.__setattr__(self, "time_labels", tuple(int(t) for t in self.time_labels))
        if self.populations is not None:
            object.__setattr__(
                self, "populations", dict((k, float(v)) for k, v in self.populations.items())
            )
        if outcomes.ndim != 2:
            raise DataValidationError("outcomes must be a 2-D (group x time) matrix")
        j, t = outcomes.shape
        if j == 0 or t == 0:
            raise DataValidationError("panel must contain at least one group and one period")
        if len(self.group_labels) != j:
            raise DataValidationError(f"{len(self.group_labels)} group labels for {j} rows")
        if len(self.time_labels) != t:
            raise DataValidationError(f"{len(self.time_labels)} time labels for {t} columns")
        if len(set(self.group_labels)) != j:
            raise DataValidationError("group labels must be unique")
        if any(b <= a for a, b in zip(self.time_labels, self.time_labels[1:])):
            raise DataValidationError("time labels must be strictly increasing")
        if not np.all(np.isfinite(outcomes)):
            raise DataValidationError("outcomes contain non-finite values")
        if not 0 <= self.target_index < j:
            raise DataValidationError(f"target_index {self.target_index} out of range for {j} groups")
        if not 1 <= self.intervention_time < t:
            raise DataValidationError(
                f"intervention_time must satisfy 1 <= T0 < T, got T0={self.intervention_time}, T={t}"
            )

    @property
    def n_groups(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_periods(self) -> int:
        return self.outcomes.shape[1]

    @property
    def target_label(self) -> str:
        return self.group_labels[self.target_index]

    def group_index(self, label: str) -> int:
        try:
            return self.group_labels.index(label)
        except ValueError:
            raise UsageError(f"unknown group label {label!r}") from None

    def time_index(self, time: int) -> int:
        try:
            return self.time_labels.index(int(time))
        except ValueError:
            raise UsageError(f"period {time} is outside the panel range") from None

    def donor_indices(self) -> tuple[int, ...]:
        """All group indices except the target, in panel order."""
        return tuple(j for j in range(self.n_groups) if j != self.target_index)


@dataclass(frozen=True, eq=False)
class PanelView:
    """A window of a panel; shares the underlying outcome storage."""

    outcomes: np.ndarray
    group_labels: tuple[str, ...]
    time_labels: tuple[int, ...]
    target_index: int

    @property
    def n_periods(self) -> int:
        return self.outcomes.shape[1]


@dataclass(frozen=True, eq=False)
class AuxMatrix:
    """Group-level auxiliary covariates, row-aligned with a panel's groups."""

    values: np.ndarray
    covariate_labels: tuple[str, ...]

    def __post_init__(self):
        values = _frozen_array(self.values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "covariate_labels", tuple(self.covariate_labels))
        if values.ndim != 2:
            raise DataValidationError("covariate values must be a 2-D (group x covariate) matrix")
        if values.shape[1] != len(self.covariate_labels):
            raise DataValidationError(
                f"{len(self.covariate_labels)} covariate labels for {values.shape[1]} columns"
            )
        if not np.all(np.isfinite(values)):
            raise DataValidationError("covariate values contain non-finite entries")

    @property
    def n_covariates(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    """Post-period gaps between the observed target and its synthetic control.

    ``per_period`` holds one ``(time, observed, synthetic, gap)`` tuple per
    post-intervention period, with ``gap = observed - synthetic`` exactly.
    ``tau`` is the gap at the final period.
    """

    tau: float
    per_period: tuple[tuple[int, float, float, float], ...]


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(f"non-numeric {column} {text!r} on line {line_no}") from None
    if not math.isfinite(value):
        raise DataValidationError(f"non-finite {column} {text!r} on line {line_no}")
    return value


def _parse_int(text: str, line_no: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataValidationError(f"non-integer {column} {text!r} on line {line_no}") from None


def from_csv(path, target: str, intervention_time: int) -> PanelData:
    """Read a long-format panel CSV into a validated :class:`PanelData`.

    Schema (header required): ``group,time,outcome`` with an optional
    fourth ``population`` column. Every (group, time) cell must be present
    exactly once; rows may arrive in any order. Group order in the result
    follows first appearance in the file; periods are sorted.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["group", "time", "outcome"] or len(header) > 4:
            raise DataValidationError(
                f"{path}: expected header 'group,time,outcome[,population]', got {','.join(header)}"
            )
        has_population = len(header) == 4 and header[3] == "population"
        if len(header) == 4 and not has_population:
            raise DataValidationError(f"{path}: unknown fourth column {header[3]!r}")

        cells: dict[tuple[str, int], float] = {}
        groups: list[str] = []
        seen_groups: set[str] = set()
        times: set[int] = set()
        populations: dict[str, float] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(f"{path}: wrong field count on line {line_no}")
            group = row[0].strip()
            time = _parse_int(row[1].strip(), line_no, "time")
            outcome = _parse_float(row[2].strip(), line_no, "outcome")
            if (group, time) in cells:
                raise DataValidationError(f"{path}: duplicate cell ({group}, {time}) on line {line_no}")
            cells[(group, time)] = outcome
            if group not in seen_groups:
                seen_groups.add(group)
                groups.append(group)
            times.add(time)
            if has_population and row[3].strip() != "":
                pop = _parse_float(row[3].strip(), line_no, "population")
                if group in populations and populations[group] != pop:
                    raise DataValidationError(
                        f"{path}: conflicting population for {group!r} on line {line_no}"
                    )
                populations[group] = pop

    if not cells:
        raise DataValidationError(f"{path}: no data rows")
    time_labels = tuple(sorted(times))
    for group in groups:
        for time in time_labels:
            if (group, time) not in cells:
                raise DataValidationError(f"{path}: missing cell ({group}, {time})")
    if target not in groups:
        raise UsageError(f"target {target!r} not found among groups {groups}")

    outcomes = np.array([[cells[(g, t)] for t in time_labels] for g in groups])
    return PanelData(
        outcomes=outcomes,
        group_labels=tuple(groups),
        time_labels=time_labels,
        target_index=groups.index(target),
        intervention_time=int(intervention_time),
        populations=populations if populations else None,
    )


def format_float(value: float) -> str:
    """Canonical (shortest round-trip) decimal form of a float."""
    return repr(float(value))


def to_csv(panel: PanelData, path) -> None:
    """Write a panel back out in the long-format CSV schema."""
    has_population = panel.populations is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "time", "outcome"] + (["population"] if has_population else []))
        for j, group in enumerate(panel.group_labels):
            for t, time in enumerate(panel.time_labels):
                row = [group, str(time), format_float(panel.outcomes[j, t])]
                if has_population:
                    pop = panel.populations.get(group)
                    row.append("" if pop is None else format_float(pop))
                writer.writerow(row)


def aux_to_csv(aux: AuxMatrix, group_labels: Sequence[str], path) -> None:
    """Write covariates as `group,<label>,...` with one row per group."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", *aux.covariate_labels])
        for j, label in enumerate(group_labels):
            writer.writerow([label, *(format_float(v) for v in aux.values[j])])


def aux_from_csv(path, group_labels: Sequence[str]) -> AuxMatrix:
    """Read a covariate CSV, reordering rows to match ``group_labels``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        if not header or header[0] != "group":
            raise DataValidationError(f"{path}: first column must be 'group'")
        rows = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(f"{path}: wrong field count on line {line_no}")
            rows[row[0]] = [_parse_float(v, line_no, "covariate") for v in row[1:]]
    missing = [g for g in group_labels if g not in rows]
    if missing:
        raise DataValidationError(f"{path}: missing covariate rows for {missing}")
    return AuxMatrix(
        values=np.array([rows[g] for g in group_labels]),
        covariate_labels=tuple(header[1:]),
    )


def aggregate_groups(
    panel: PanelData,
    grouping: Mapping[str, str],
    populations: Mapping[str, float] | None = None,
) -> PanelData:
    """Merge groups into population-weighted super-groups.

    Each super-group outcome at time t is the population-weighted mean of
    its members' outcomes. A group mapped alone passes through unchanged
    (no weighting applied), so an identity map is exact. ``populations``
    defaults to the panel's own side table and is only consulted for
    super-groups with more than one member. Super-group order follows the
    first appearance of a member in the panel.
    """
    if populations is None:
        populations = panel.populations or {}
    members: dict[str, list[int]] = {}
    order: list[str] = []
    for j, group in enumerate(panel.group_labels):
        if group not in grouping:
            raise UsageError(f"group {group!r} missing from the grouping map")
        super_group = grouping[group]
        if super_group not in members:
            members[super_group] = []
            order.append(super_group)
        members[super_group].append(j)

    rows = []
    new_populations: dict[str, float] = {}
    for super_group in order:
        idx = members[super_group]
        if not idx:
            raise DataValidationError(f"super-group {super_group!r} has no members")
        if len(idx) == 1:
            rows.append(panel.outcomes[idx[0]])
            label = panel.group_labels[idx[0]]
            if label in populations:
                new_populations[super_group] = float(populations[label])
            continue
        weights = []
        for j in idx:
            label = panel.group_labels[j]
            if label not in populations:
                raise UsageError(f"no population given for group {label!r}")
            pop = float(populations[label])
            if pop <= 0:
                raise DataValidationError(f"population for {label!r} must be positive, got {pop}")
            weights.append(pop)
        total = sum(weights)
        if total <= 0:
            raise DataValidationError(f"super-group {super_group!r} has zero total population")
        weights = np.array(weights) / total
        rows.append(weights @ panel.outcomes[idx])
        new_populations[super_group] = total

    target_super = grouping[panel.target_label]
    return PanelData(
        outcomes=np.array(rows),
        group_labels=tuple(order),
        time_labels=panel.time_labels,
        target_index=order.index(target_super),
        intervention_time=panel.intervention_time,
        populations=new_populations or None,
    )


def select_groups(panel: PanelData, labels: Sequence[str]) -> PanelData:
    """Restrict a panel to the given groups (target must be kept)."""
    keep = [panel.group_index(label) for label in labels]
    if panel.target_index not in keep:
        raise UsageError(f"selection must include the target {panel.target_label!r}")
    kept_labels = tuple(panel.group_labels[j] for j in keep)
    populations = None
    if panel.populations is not None:
        populations = {g: panel.populations[g] for g in kept_labels if g in panel.populations}
    return replace(
        panel,
        outcomes=panel.outcomes[keep],
        group_labels=kept_labels,
        target_index=kept_labels.index(panel.target_label),
        populations=populations,
    )


def split_pre_post(panel: PanelData) -> tuple[PanelView, PanelView]:
    """Views of the pre- (t <= T0) and post-intervention periods."""
    t0 = panel.intervention_time
    pre = PanelView(
        outcomes=panel.outcomes[:, :t0],
        group_labels=panel.group_labels,
        time_labels=panel.time_labels[:t0],
        target_index=panel.target_index,
    )
    post = PanelView(
        outcomes=panel.outcomes[:, t0:],
        group_labels=panel.group_labels,
        time_labels=panel.time_labels[t0:],
        target_index=panel.target_index,
    )
    return pre, post


def standardize_rows(matrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shift and scale each row to mean 0, unit sample standard deviation.

    Constant rows map to all-zeros with their scale recorded as 1, so the
    transform is always invertible via :func:`destandardize_rows`.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    means = matrix.mean(axis=1)
    scales = matrix.std(axis=1, ddof=1) if matrix.shape[1] > 1 else np.zeros(matrix.shape[0])
    scales = np.where(scales > 0, scales, 1.0)
    standardized = (matrix - means[:, None]) / scales[:, None]
    return standardized, means, scales


def destandardize_rows(standardized, means, scales) -> np.ndarray:
    """Invert :func:`standardize_rows`."""
    standardized = np.atleast_2d(np.asarray(standardized, dtype=float))
    return standardized * np.asarray(scales)[:, None] + np.asarray(means)[:, None]
