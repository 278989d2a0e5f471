"""Individual-level data generator with exposed ground truth.

Groups are distributions over K cause categories; an individual's outcome
is a nonlinear, time-varying function of their category plus Gaussian
noise; the panel cell is the mean (or median) over fresh individuals drawn
each period. Because the generator keeps its compositions and conditional
means, every study carries its own noiseless oracle
(:func:`expected_outcome`).

Randomness is organized as independent child streams of the master seed:
one stream for group compositions and outcome functions, one per
(group, period) cell, and one per covariate block. Distinct cells can
therefore be generated independently or in parallel, and the panel does
not change when covariate settings do.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataValidationError, UsageError
from .panel import AuxMatrix, PanelData, aux_from_csv, aux_to_csv, from_csv, to_csv

__all__ = [
    "GroupComposition",
    "OutcomeFunctionFamily",
    "SimConfig",
    "SimulatedStudy",
    "sample_compositions",
    "conditional_mean_default",
    "simulate_panel",
    "expected_outcome",
    "generate_covariates",
    "write_study_bundle",
    "load_study_bundle",
]

AGGREGATIONS = ("mean", "median")
COMPOSITION_MODES = ("invariant_split", "dirichlet_mask")

# Mass reserved for the shared (invariant) categories in invariant_split
# mode; any constant in (0, 1) preserves the identification guarantees.
INVARIANT_MASS = 0.5

# Structure of the default conditional-mean family. Every category's
# curve is a loading combination of one shared basis:
#   level, log trend, N_OSCILLATIONS sinusoids that complete full cycles
#   inside any realistic fit window, and one slowly accelerating ramp
#   (t/T)^RAMP_POWER whose energy concentrates late in the horizon.
# The wrapped oscillations carry as much energy inside a fit window as
# beyond it, so weight noise cannot blow up out-of-window; the ramp is
# the one direction that is quiet early and large late, which is what
# makes counterfactual error explode once the differing categories
# outnumber the donors while the fit-window error stays flat.
N_OSCILLATIONS = 4
OSC_FREQUENCY_RANGE = (0.7, 2.9)
PHASE_RANGE = (0.0, 2.0 * np.pi)
OSC_LOADING_RANGE = (-1.8, 1.8)
LEVEL_RANGE = (-2.0, 2.0)
TREND_RANGE = (-1.0, 1.0)
RAMP_POWER = 3.0
RAMP_LOADING_RANGE = (-2.8, 2.8)

# Multiplier applied to the sine argument of the m-th suitable covariate:
# the ladder runs from SIN_LADDER_MAX/count up to SIN_LADDER_MAX. Gentle
# warps keep these covariates close to rescaled outcome measurements.
SIN_LADDER_MAX = 0.5

# Concentration of the per-group sub-distribution on the differing
# categories (invariant_split mode).
DIRICHLET_ALPHA = 1.0


def _stream(seed: int, *key: int) -> np.random.Generator:
    """Child generator of the master seed, keyed by integers."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True, eq=False)
class GroupComposition:
    """Probability vector over the K cause categories for one group."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise DataValidationError("composition must be a 1-D probability vector")
        if probs.min() < 0:
            raise DataValidationError("composition entries must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DataValidationError(f"composition sums to {probs.sum()!r}, not 1")

    @property
    def n_categories(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class OutcomeFunctionFamily:
    """Conditional outcome means per (category, period), plus noise model.

    ``conditional_mean[k, t-1]`` is the expected control outcome of an
    individual in category ``k`` at period ``t``. ``post_intervention_shift``
    is added to target individuals' outcomes after the intervention only;
    it never enters the conditional means.
    """

    conditional_mean: np.ndarray
    noise_sd: float = 1.0
    post_intervention_shift: float = 0.0

    def __post_init__(self):
        lam = np.array(self.conditional_mean, dtype=float)
        lam.setflags(write=False)
        object.__setattr__(self, "conditional_mean", lam)
        if lam.ndim != 2:
            raise DataValidationError("conditional_mean must be a (category x period) matrix")
        if not np.all(np.isfinite(lam)):
            raise DataValidationError("conditional_mean contains non-finite values")
        if self.noise_sd < 0:
            raise UsageError("noise_sd must be nonnegative")

    @property
    def n_categories(self) -> int:
        return self.conditional_mean.shape[0]

    @property
    def n_periods(self) -> int:
        return self.conditional_mean.shape[1]


@dataclass(frozen=True)
class SimConfig:
    """All knobs of one simulated study. The seed is part of the identity:
    equal configs produce bit-identical studies."""

    S_cardinality: int
    T: int
    T0: int
    seed: int
    K: int = 12
    num_donors: int = 5
    N_per_group: int = 2000
    aggregation: str = "mean"
    composition_mode: str = "invariant_split"
    noise_sd: float = 1.0
    post_intervention_shift: float = 0.0
    covariate_count: int = 10
    ramp_scale: float = 1.0

    def __post_init__(self):
        if not 0 <= self.S_cardinality <= self.K:
            raise UsageError(f"S_cardinality must lie in 0..{self.K}")
        if self.N_per_group < 1:
            raise UsageError("N_per_group must be at least 1")
        if not 1 <= self.T0 < self.T:
            raise UsageError("need 1 <= T0 < T")
        if self.num_donors < 1:
            raise UsageError("need at least one donor group")
        if self.aggregation not in AGGREGATIONS:
            raise UsageError(f"aggregation must be one of {AGGREGATIONS}")
        if self.composition_mode not in COMPOSITION_MODES:
            raise UsageError(f"composition_mode must be one of {COMPOSITION_MODES}")
        if self.covariate_count < 0:
            raise UsageError("covariate_count must be nonnegative")
        if self.ramp_scale < 0:
            raise UsageError("ramp_scale must be nonnegative")

    @property
    def n_groups(self) -> int:
        return 1 + self.num_donors


@dataclass(frozen=True, eq=False)
class SimulatedStudy:
    """A generated panel together with its hidden ground truth.

    ``compositions`` is ordered target first, matching the panel's groups.
    """

    panel: PanelData
    compositions: tuple[GroupComposition, ...]
    functions: OutcomeFunctionFamily
    true_S: frozenset[int]
    aux_suitable: AuxMatrix
    aux_unsuitable: AuxMatrix
    config: SimConfig = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "compositions", tuple(self.compositions))
        object.__setattr__(self, "true_S", frozenset(int(k) for k in self.true_S))
        cfg = self.config
        if self.panel.n_groups != cfg.n_groups or self.panel.n_periods != cfg.T:
            raise DataValidationError("panel dimensions do not match the study config")
        if cfg.composition_mode == "invariant_split" and len(self.true_S) != cfg.S_cardinality:
            raise DataValidationError(
                f"invariant_split study must have |S| = {cfg.S_cardinality}, got {len(self.true_S)}"
            )


def sample_compositions(
    cfg: SimConfig, rng: np.random.Generator
) -> tuple[tuple[GroupComposition, ...], frozenset[int]]:
    """Draw one composition per group (target first) and the differing set.

    invariant_split: the differing categories are chosen up front and get
    an independent Dirichlet(1,..,1) sub-distribution per group; all other
    categories share one fixed sub-distribution, so exactly S_cardinality
    categories differ across groups. (S_cardinality = 1 is vacuous: a
    single category cannot differ alone under the sum-to-one constraint,
    so the sampled compositions are then identical, as with 0.)

    dirichlet_mask: each group gets a Bernoulli(1 - |S|/K) support mask and
    a flat Dirichlet on it (all-zero masks redrawn; at |S| = K the mask
    degenerates and each group collapses to a random point mass). The
    differing set is computed from the sampled vectors, not imposed.
    """
    k, s_card, n_groups = cfg.K, cfg.S_cardinality, cfg.n_groups
    if cfg.composition_mode == "invariant_split":
        true_s = np.sort(rng.choice(k, size=s_card, replace=False)) if s_card else np.array([], int)
        complement = np.setdiff1d(np.arange(k), true_s)
        shared = rng.dirichlet(np.ones(complement.size)) if complement.size else None
        compositions = []
        for _ in range(n_groups):
            probs = np.zeros(k)
            if s_card == 0:
                probs[complement] = shared
            elif complement.size == 0:
                probs[true_s] = rng.dirichlet(np.full(s_card, DIRICHLET_ALPHA))
            else:
                probs[complement] = INVARIANT_MASS * shared
                probs[true_s] = (1.0 - INVARIANT_MASS) * rng.dirichlet(np.full(s_card, DIRICHLET_ALPHA))
            compositions.append(GroupComposition(probs))
        return tuple(compositions), frozenset(int(i) for i in true_s)

    p_keep = 1.0 - s_card / k
    compositions = []
    for _ in range(n_groups):
        if p_keep == 0.0:
            mask = np.zeros(k, dtype=bool)
            mask[rng.integers(k)] = True
        else:
            mask = rng.binomial(1, p_keep, k).astype(bool)
            while not mask.any():
                mask = rng.binomial(1, p_keep, k).astype(bool)
        probs = np.zeros(k)
        probs[mask] = rng.dirichlet(np.ones(int(mask.sum())))
        compositions.append(GroupComposition(probs))
    stacked = np.array([c.probs for c in compositions])
    gaps = np.abs(stacked - stacked[0]).max(axis=0)
    return tuple(compositions), frozenset(int(i) for i in np.nonzero(gaps > 1e-9)[0])


def conditional_mean_default(
    K: int,
    T: int,
    rng: np.random.Generator,
    noise_sd: float = 1.0,
    post_intervention_shift: float = 0.0,
    ramp_scale: float = 1.0,
) -> OutcomeFunctionFamily:
    """Smooth nonlinear time-varying conditional means.

    Each category curve is a random loading combination of a shared basis:
    level, log trend, a few sinusoids, and a late-rising ramp (see the
    module constants). ``ramp_scale`` multiplies the ramp loadings; zero
    removes the late-rising direction entirely. Nonlinear in t and
    non-additive across categories; deterministic given the generator
    state.
    """
    if K < 1 or T < 1:
        raise UsageError("need K >= 1 and T >= 1")
    t = np.arange(1, T + 1)
    nu = rng.uniform(*OSC_FREQUENCY_RANGE, N_OSCILLATIONS)
    psi = rng.uniform(*PHASE_RANGE, N_OSCILLATIONS)
    oscillations = np.sin(nu[:, None] * t + psi[:, None])
    level = rng.uniform(*LEVEL_RANGE, K)
    trend = rng.uniform(*TREND_RANGE, K)
    osc_loadings = rng.uniform(*OSC_LOADING_RANGE, (K, N_OSCILLATIONS))
    ramp_loadings = ramp_scale * rng.uniform(*RAMP_LOADING_RANGE, K)
    lam = (
        level[:, None]
        + trend[:, None] * np.log1p(t)
        + osc_loadings @ oscillations
        + ramp_loadings[:, None] * (t / T) ** RAMP_POWER
    )
    return OutcomeFunctionFamily(lam, noise_sd=noise_sd, post_intervention_shift=post_intervention_shift)


def expected_outcome(composition: GroupComposition, functions: OutcomeFunctionFamily, t: int) -> float:
    """Noiseless expected control outcome at period t (1-based)."""
    if not 1 <= t <= functions.n_periods:
        raise UsageError(f"period {t} outside 1..{functions.n_periods}")
    if composition.n_categories != functions.n_categories:
        raise UsageError("composition and outcome family disagree on K")
    return float(functions.conditional_mean[:, t - 1] @ composition.probs)


def _draw_cell(
    rng: np.random.Generator,
    composition: GroupComposition,
    functions: OutcomeFunctionFamily,
    t: int,
    n: int,
    shift: float,
) -> np.ndarray:
    x = rng.choice(composition.n_categories, size=n, p=composition.probs)
    y = functions.conditional_mean[x, t - 1].copy()
    if functions.noise_sd > 0:
        y += rng.normal(0.0, functions.noise_sd, n)
    if shift != 0.0:
        y += shift
    return y


def simulate_panel(cfg: SimConfig, rng: np.random.Generator | None = None) -> SimulatedStudy:
    """Generate a full study: panel, ground truth, and covariate blocks.

    ``rng`` drives the group-level draws (compositions and outcome
    functions) and defaults to a stream derived from ``cfg.seed``; the
    individual draws of each (group, period) cell always come from the
    cell's own child stream of ``cfg.seed``.
    """
    if rng is None:
        rng = _stream(cfg.seed, 0)
    compositions, true_s = sample_compositions(cfg, rng)
    functions = conditional_mean_default(
        cfg.K,
        cfg.T,
        rng,
        noise_sd=cfg.noise_sd,
        post_intervention_shift=cfg.post_intervention_shift,
        ramp_scale=cfg.ramp_scale,
    )

    outcomes = np.empty((cfg.n_groups, cfg.T))
    aggregate = np.mean if cfg.aggregation == "mean" else np.median
    for j, comp in enumerate(compositions):
        for t in range(1, cfg.T + 1):
            shift = cfg.post_intervention_shift if (j == 0 and t > cfg.T0) else 0.0
            y = _draw_cell(_stream(cfg.seed, 2, j, t), comp, functions, t, cfg.N_per_group, shift)
            outcomes[j, t - 1] = aggregate(y)

    panel = PanelData(
        outcomes=outcomes,
        group_labels=("target",) + tuple(f"donor_{i}" for i in range(1, cfg.num_donors + 1)),
        time_labels=tuple(range(1, cfg.T + 1)),
        target_index=0,
        intervention_time=cfg.T0,
    )
    aux_suitable = _make_covariates(
        compositions, functions, cfg, cfg.covariate_count, "suitable", _stream(cfg.seed, 3)
    )
    aux_unsuitable = _make_covariates(
        compositions, functions, cfg, cfg.covariate_count, "unsuitable", _stream(cfg.seed, 4)
    )
    return SimulatedStudy(
        panel=panel,
        compositions=compositions,
        functions=functions,
        true_S=true_s,
        aux_suitable=aux_suitable,
        aux_unsuitable=aux_unsuitable,
        config=cfg,
    )


def _make_covariates(
    compositions: Sequence[GroupComposition],
    functions: OutcomeFunctionFamily,
    cfg: SimConfig,
    count: int,
    kind: str,
    rng: np.random.Generator,
) -> AuxMatrix:
    """Sample group-level covariates of the requested kind.

    suitable: per covariate m, the mean of sin(c_m * Y) over individuals
    sampled at one fixed pre-period, with c_m = SIN_LADDER_MAX * m / count.
    These are alternative (gently warped) measurements of the outcome
    itself.

    unsuitable: per covariate m, the mean of a random recoding of the raw
    category labels, i.e. a summary of group characteristics.

    Draw order per covariate: the covariate's parameter (period choice or
    code permutation) first, then each group's individuals in panel order.
    """
    if kind not in ("suitable", "unsuitable"):
        raise UsageError(f"covariate kind must be 'suitable' or 'unsuitable', got {kind!r}")
    n_groups = len(compositions)
    values = np.empty((n_groups, count))
    labels = []
    for m in range(1, count + 1):
        if kind == "suitable":
            t_star = int(rng.integers(1, cfg.T0 + 1))
            c_m = SIN_LADDER_MAX * m / count
            labels.append(f"sin{m}_t{t_star}")
            for j, comp in enumerate(compositions):
                y = _draw_cell(rng, comp, functions, t_star, cfg.N_per_group, 0.0)
                values[j, m - 1] = np.sin(c_m * y).mean()
        else:
            codes = rng.permutation(cfg.K)
            labels.append(f"code{m}")
            for j, comp in enumerate(compositions):
                x = rng.choice(cfg.K, size=cfg.N_per_group, p=comp.probs)
                values[j, m - 1] = codes[x].mean()
    return AuxMatrix(values=values, covariate_labels=tuple(labels))


def generate_covariates(
    study: SimulatedStudy, count: int, kind: str, rng: np.random.Generator
) -> AuxMatrix:
    """Fresh covariate block for an existing study (see _make_covariates)."""
    return _make_covariates(study.compositions, study.functions, study.config, count, kind, rng)


def write_study_bundle(study: SimulatedStudy, outdir) -> None:
    """Export a study as panel.csv, truth.json, and two covariate CSVs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    to_csv(study.panel, outdir / "panel.csv")
    aux_to_csv(study.aux_suitable, study.panel.group_labels, outdir / "covariates_suitable.csv")
    aux_to_csv(study.aux_unsuitable, study.panel.group_labels, outdir / "covariates_unsuitable.csv")
    truth = {
        "group_labels": list(study.panel.group_labels),
        "compositions": [list(map(float, c.probs)) for c in study.compositions],
        "conditional_mean": [list(map(float, row)) for row in study.functions.conditional_mean],
        "noise_sd": study.functions.noise_sd,
        "post_intervention_shift": study.functions.post_intervention_shift,
        "true_S": sorted(study.true_S),
        "config": asdict(study.config),
    }
    with open(outdir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def load_study_bundle(indir) -> SimulatedStudy:
    """Reconstruct a study from a bundle written by write_study_bundle."""
    indir = Path(indir)
    with open(indir / "truth.json", encoding="utf-8") as fh:
        truth = json.load(fh)
    cfg = SimConfig(**truth["config"])
    panel = from_csv(indir / "panel.csv", target=truth["group_labels"][0], intervention_time=cfg.T0)
    functions = OutcomeFunctionFamily(
        conditional_mean=np.array(truth["conditional_mean"]),
        noise_sd=truth["noise_sd"],
        post_intervention_shift=truth["post_intervention_shift"],
    )
    return SimulatedStudy(
        panel=panel,
        compositions=tuple(GroupComposition(np.array(p)) for p in truth["compositions"]),
        functions=functions,
        true_S=frozenset(truth["true_S"]),
        aux_suitable=aux_from_csv(indir / "covariates_suitable.csv", panel.group_labels),
        aux_unsuitable=aux_from_csv(indir / "covariates_unsuitable.csv", panel.group_labels),
        config=cfg,
    )
