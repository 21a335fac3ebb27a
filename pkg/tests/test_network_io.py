import io
import json

import numpy as np
import pandas as pd
import pytest

from diot.cost_model import BprCost, MonomialSumCost
from diot.errors import GridError, NetworkValidationError, ParseError, UnknownEdgeError
from diot.network_io import (
    dump_network,
    dump_tolls,
    load_network,
    load_tolls,
    parse_demand,
    parse_grid,
    parse_network,
    parse_range,
    parse_tolls,
    parse_values,
    resolve_fixture,
    write_sweep_csv,
)
from tests.helpers import random_damg

FIXTURES = ["pigou", "braess", "cyclic", "double_pigou", "two_link_nonbpr"]


def test_fixture_shapes(pigou, braess):
    assert (len(pigou.vertices), len(pigou.edges), len(pigou.commodities), pigou.beta) == (2, 2, 1, 1)
    assert (len(braess.vertices), len(braess.edges)) == (4, 5)
    assert braess.edge("e5").cost == BprCost(t=0, a=0)


def test_fixture_lookup_forms():
    assert resolve_fixture("pigou") == resolve_fixture("fixtures/pigou") == resolve_fixture("pigou.json")
    with pytest.raises(FileNotFoundError):
        resolve_fixture("no_such_network")


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip_fixtures(name, tmp_path):
    network = load_network(name)
    target = tmp_path / f"{name}.json"
    target.write_text(dump_network(network), encoding="utf-8")
    assert load_network(target) == network


def test_round_trip_keeps_cost_forms(two_link_nonbpr):
    document = json.loads(dump_network(two_link_nonbpr))
    assert document["edges"][0] == {
        "id": "e1", "tail": "o", "head": "d",
        "terms": [{"coef": 1.0, "exp": 2.0}, {"coef": 1.0, "exp": 1.0}],
    }
    assert isinstance(parse_network(dump_network(two_link_nonbpr)).edge("e1").cost, MonomialSumCost)


def test_round_trip_random_networks():
    for seed in range(5):
        network = random_damg(seed)
        assert parse_network(dump_network(network)) == network


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_network('{\n  "beta": 1,\n  "vertices": [}\n')
    assert (info.value.line, info.value.column) == (3, 16)
    assert info.value.code == "PARSE"


@pytest.mark.parametrize(
    "document, message",
    [
        ({"beta": 1, "vertices": ["o", "d"], "edges": [{"id": "e1", "tail": "o", "head": "x", "t": 1, "a": 0}],
          "commodities": [{"id": "c1", "origin": "o", "destination": "d"}]}, "unknown vertex"),
        ({"beta": 1, "vertices": ["o", "d"], "edges": [{"id": "e1", "tail": "o", "head": "d"}],
          "commodities": [{"id": "c1", "origin": "o", "destination": "d"}]}, "exactly one"),
        ({"beta": 1, "vertices": ["o", "d"],
          "edges": [{"id": "e1", "tail": "o", "head": "d", "t": 1, "terms": [{"coef": 1, "exp": 1}]}],
          "commodities": [{"id": "c1", "origin": "o", "destination": "d"}]}, "exactly one"),
        ({"beta": -1, "vertices": ["o", "d"], "edges": [], "commodities": []}, "beta"),
        ({"beta": 1, "vertices": [], "edges": [], "commodities": [], "demand": 1}, "demand"),
    ],
)
def test_validation_errors(document, message):
    with pytest.raises(NetworkValidationError, match=message):
        parse_network(json.dumps(document))


def test_tolls_default_missing_edges(braess):
    tolls, defaulted = load_tolls("braess_center_half.toll", braess)
    assert defaulted == ["e1", "e2", "e3", "e4"]
    np.testing.assert_allclose(tolls.values, [0, 0, 0, 0, 0.5])

    tolls, defaulted = parse_tolls(dump_tolls(tolls), braess)
    assert defaulted == [] and tolls["e5"] == 0.5


@pytest.mark.parametrize("text, error", [("[1, 2]", ParseError), ('{"e1": "x"}', ParseError), ('{"e9": 1}', UnknownEdgeError)])
def test_bad_toll_documents(pigou, text, error):
    with pytest.raises(error):
        parse_tolls(text, pigou)


def test_parse_demand(double_pigou):
    assert parse_demand("c1=1,c2=0.5", double_pigou).values == {"c1": 1.0, "c2": 0.5}
    assert parse_demand("2", double_pigou).values == {"c1": 2.0, "c2": 2.0}
    with pytest.raises(ParseError):
        parse_demand("c1=abc,c2=1", double_pigou)
    with pytest.raises(ParseError):
        parse_demand("c1=1,c2", double_pigou)


def test_parse_values():
    np.testing.assert_allclose(parse_values("0.01:1:3"), [0.01, 0.1, 1.0])
    np.testing.assert_allclose(parse_values("0.5, 1, 2"), [0.5, 1, 2])
    for bad in ("0:1:3", "1:0.5:3", "1:2:0"):
        with pytest.raises(GridError):
            parse_values(bad)
    with pytest.raises(ParseError):
        parse_values("1:2")


def test_parse_grid(double_pigou):
    assert len(parse_grid("0.1:1:5", double_pigou)) == 25
    grid = parse_grid("c1=0.5,1;c2=2", double_pigou)
    np.testing.assert_allclose(grid.vectors, [[0.5, 2.0], [1.0, 2.0]])
    with pytest.raises(GridError):
        parse_grid("0.01:1:200", double_pigou, max_points=10_000)


def test_parse_range():
    values = parse_range("-2:2:0.01")
    assert len(values) == 401
    assert values[0] == -2 and values[-1] == pytest.approx(2)
    assert 0.5 in np.round(values, 12)
    with pytest.raises(GridError):
        parse_range("1:0:0.1")


def test_sweep_csv_format():
    frame = pd.DataFrame({"demand_c1": [0.1, 1 / 3], "L_opt": [0.09, 2 / 3], "converged": [True, True]})
    buffer = io.StringIO()
    write_sweep_csv(frame, buffer)
    assert buffer.getvalue() == (
        "demand_c1,L_opt,converged\n"
        "0.1,0.09,True\n"
        "0.333333333333,0.666666666667,True\n"
    )
