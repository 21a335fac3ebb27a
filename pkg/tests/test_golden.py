"""Bundled networks against their recorded paths and toll constructions."""
import json
from pathlib import Path

import pytest

from diot.errors import DiotError
from diot.network_io import load_network
from diot.tolls import budget_diot, nonnegative_diot_dag, trivial_diot

GOLDEN_DIR = Path(__file__).parent / "golden"
CASES = sorted(p.stem for p in GOLDEN_DIR.glob("*.json"))


def _expected(name):
    return json.loads((GOLDEN_DIR / f"{name}.json").read_text(encoding="utf-8"))


def _outcome(construct, network):
    try:
        result = construct(network)
    except DiotError as exc:
        return {"error": exc.code}
    if isinstance(result, tuple):
        tolls, gamma = result
        return {"tolls": tolls.as_dict(), "gamma": gamma}
    return {"tolls": result.as_dict()}


def test_every_fixture_has_a_golden_file():
    fixtures = sorted(p.stem for p in (Path(__file__).parents[1] / "diot" / "fixtures").glob("*.json"))
    assert CASES == fixtures


@pytest.mark.parametrize("name", CASES)
def test_paths(name):
    network = load_network(name)
    assert [p.label for p in network.path_set().paths] == _expected(name)["paths"]


@pytest.mark.parametrize("name", CASES)
@pytest.mark.parametrize(
    "key, construct",
    [("trivial", trivial_diot), ("nonneg", nonnegative_diot_dag), ("budget", budget_diot)],
)
def test_constructions(name, key, construct):
    expected = _expected(name)[key]
    actual = _outcome(construct, load_network(name))
    if "error" in expected:
        assert actual == expected
    else:
        assert actual["tolls"] == pytest.approx(expected["tolls"], abs=1e-9)
        assert ("gamma" in actual) == ("gamma" in expected)
        if "gamma" in expected:
            assert actual["gamma"] == pytest.approx(expected["gamma"], abs=1e-9)
