"""Tests for ground-truth synthetic dataset generation."""

import numpy as np
import pytest

from cutinsim.errors import DomainError
from cutinsim.grid import GridSpec
from cutinsim.policy import MixedPolicyParams, UtilitySpec
from cutinsim.scenario import DiscreteSpeedDist
from cutinsim.synthetic import BandSpec, SyntheticDatasetSpec, synthesize

LOW_TRUTH = MixedPolicyParams((3.0, 4.0, 2.0), (-2.0, -3.0, -4.0),
                              (0.7, 0.6, 0.4))
MED_TRUTH = MixedPolicyParams((5.0, 3.0, 4.0), (-3.0, -2.0, -2.0),
                              (0.5, 0.7, 0.6))
LOW_DIST = DiscreteSpeedDist((8.0, 12.0), (0.5, 0.5))
MED_DIST = DiscreteSpeedDist((18.0, 22.0), (0.5, 0.5))


def _spec(n_low=300, n_med=400):
    return SyntheticDatasetSpec({
        "LOW": BandSpec(LOW_TRUTH, LOW_DIST, n_low),
        "MED": BandSpec(MED_TRUTH, MED_DIST, n_med),
    })


def test_band_speeds_must_match_band():
    with pytest.raises(DomainError, match="falls in band"):
        SyntheticDatasetSpec({
            "LOW": BandSpec(LOW_TRUTH, DiscreteSpeedDist.point(20.0), 100),
        })
    with pytest.raises(DomainError, match="at least one band"):
        SyntheticDatasetSpec({})
    with pytest.raises(DomainError, match="unknown speed band"):
        SyntheticDatasetSpec({"TOP": BandSpec(LOW_TRUTH, LOW_DIST, 10)})
    with pytest.raises(DomainError):
        BandSpec(LOW_TRUTH, LOW_DIST, -1)


def test_synthesize_counts_and_band_order():
    obs = synthesize(_spec(), seed=3)
    assert len(obs) == 700
    assert obs.band_counts() == {"LOW": 300, "MED": 400, "HIGH": 0}
    # bands are concatenated LOW first
    assert set(obs.bands[:300]) == {"LOW"}
    assert set(obs.bands[300:]) == {"MED"}


def test_synthesize_deterministic_and_band_independent():
    a = synthesize(_spec(), seed=3)
    b = synthesize(_spec(), seed=3)
    assert np.array_equal(a.gap, b.gap) and np.array_equal(a.ttc, b.ttc)
    # resizing one band leaves the other band's records untouched
    c = synthesize(_spec(n_low=50), seed=3)
    assert np.array_equal(c.select_band("MED").v_lc,
                          a.select_band("MED").v_lc)
    assert np.array_equal(c.select_band("MED").gap,
                          a.select_band("MED").gap)


def test_spec_dict_round_trip():
    spec = _spec()
    back = SyntheticDatasetSpec.from_dict(spec.to_dict())
    assert back.bands["LOW"].params == spec.bands["LOW"].params
    assert back.bands["MED"].speed_dist == spec.bands["MED"].speed_dist
    assert back.gspec == spec.gspec
    assert back.uspec == spec.uspec
    a = synthesize(spec, seed=9)
    b = synthesize(back, seed=9)
    assert np.array_equal(a.gap, b.gap)


def test_custom_geometry_is_used():
    spec = SyntheticDatasetSpec(
        {"LOW": BandSpec(LOW_TRUTH, LOW_DIST, 200)},
        uspec=UtilitySpec(5.0, 3.0, 12.0),
        gspec=GridSpec(v_max=20.0, gap_max=30.0, n_v=32, n_gap=32),
    )
    obs = synthesize(spec, seed=1)
    assert obs.v_lc.max() <= 20.0
    assert obs.gap.max() <= 30.0
