import numpy as np
import pytest

from synthpanel import PanelData


@pytest.fixture
def toy_panel() -> PanelData:
    """Four groups, six periods, T0 = 4; target is an exact donor blend."""
    t = np.arange(1, 7, dtype=float)
    donor1 = 10 + t
    donor2 = 20 - t
    donor3 = 5 + 0.5 * t**2
    target = 0.5 * donor1 + 0.5 * donor2
    return PanelData(
        outcomes=np.vstack([target, donor1, donor2, donor3]),
        group_labels=("tgt", "d1", "d2", "d3"),
        time_labels=tuple(range(1, 7)),
        target_index=0,
        intervention_time=4,
    )


def make_random_panel(rng: np.random.Generator, n_groups=6, n_periods=12, t0=8) -> PanelData:
    return PanelData(
        outcomes=rng.normal(0.0, 1.0, (n_groups, n_periods)).cumsum(axis=1),
        group_labels=tuple(f"g{i}" for i in range(n_groups)),
        time_labels=tuple(range(1, n_periods + 1)),
        target_index=0,
        intervention_time=t0,
    )
