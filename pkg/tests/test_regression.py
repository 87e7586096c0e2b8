"""Recorded outputs of fixed-seed runs.

These pin the exact numbers so that any change to a random stream, a
sampler or the faulty engine shows up as a diff. Update them deliberately.
"""

import pytest

from einfuzz.backends import FaultyBackend
from einfuzz.grammar import CfgConfig, run_validity_experiment
from einfuzz.harness import CampaignConfig, run_campaign

pytestmark = pytest.mark.slow


def test_baseline_seed1_counts():
    stats = run_validity_experiment(CfgConfig(seed=1), 100_000)
    assert stats.counts == {
        "valid": 6366,
        "parse_error": 0,
        "output_index": 59264,
        "connectivity": 31279,
        "dimension": 3091,
    }


@pytest.mark.parametrize(
    "faults, seed, expected",
    [
        (["stale-output-cursor"], 1, {"pass": 360, "stc_na": 0, "crash": 0, "wrong_code": 640}),
        (["crash-on-rank3"], 0, {"pass": 164, "stc_na": 601, "crash": 235, "wrong_code": 0}),
    ],
)
def test_faulty_campaign_counts(tmp_path, faults, seed, expected):
    stats = run_campaign(FaultyBackend(faults), CampaignConfig(seed=seed), tmp_path, iterations=1000)
    assert stats.counts == expected
