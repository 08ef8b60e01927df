import json
import math
from pathlib import Path

import numpy as np
import pytest

from netepi.epidemic import INDEX_CASE, NOT_INFECTED, UNKNOWN_INFECTOR
from netepi.io import (
    ParseError,
    config_hash,
    draw_from_json,
    draw_to_json,
    parse_config,
    parse_epidemic_csv,
    parse_network_csv,
    read_draws,
    read_observed,
    write_draws,
    write_epidemic_csv,
    write_manifest,
    write_network_csv,
    write_observed,
)
from netepi.mcmc import ChainConfig, EtaPriors, run_chain

from conftest import observed, small_outbreak

FIXTURES = Path(__file__).parent / "fixtures"


def test_golden_epidemic_file():
    rec, fields, assessments = parse_epidemic_csv(FIXTURES / "epidemic_small.csv")
    assert rec.n_members == 5
    assert rec.infector.tolist() == [INDEX_CASE, 0, NOT_INFECTED, UNKNOWN_INFECTOR, NOT_INFECTED]
    assert math.isnan(rec.exposure[1]) and rec.exposure[3] == 1.5
    assert math.isnan(rec.removal[3])
    assert fields["E"].tolist() == [True, False, False, True, False]
    assert fields["T"].tolist() == [True, True, False, False, False]
    assert assessments == {1: 0}


def test_golden_network_and_bundle():
    net, obs = parse_network_csv(FIXTURES / "network_small.csv", 5)
    assert net.edges().tolist() == [[0, 1], [0, 3]]
    assert int(np.triu(obs, 1).sum()) == 5
    data, mask = read_observed(FIXTURES / "epidemic_small.csv", FIXTURES / "network_small.csv")
    assert mask.sampled.tolist() == [True, False, False, False, False]
    assert data.index_case == 0


def test_golden_files_rewrite_byte_identically(tmp_path):
    data, _ = read_observed(FIXTURES / "epidemic_small.csv", FIXTURES / "network_small.csv")
    write_observed(tmp_path, data)
    assert (tmp_path / "epidemic.csv").read_text() == (FIXTURES / "epidemic_small.csv").read_text()
    assert (tmp_path / "network.csv").read_text() == (FIXTURES / "network_small.csv").read_text()


def test_epidemic_round_trip_is_exact(tmp_path):
    net, rec, _ = small_outbreak(seed=3)
    write_epidemic_csv(tmp_path / "e.csv", rec)
    back, fields, _ = parse_epidemic_csv(tmp_path / "e.csv")
    inf = rec.infected
    for a, b in ((rec.exposure, back.exposure), (rec.infectious, back.infectious), (rec.removal, back.removal)):
        assert np.array_equal(a[inf], b[inf])
    assert np.array_equal(rec.infector, back.infector)
    write_network_csv(tmp_path / "n.csv", net)
    net2, obs = parse_network_csv(tmp_path / "n.csv")
    assert net2 == net and obs.sum() == net.n_members * (net.n_members - 1)


def test_observed_bundle_round_trip(tmp_path):
    net, rec, _ = small_outbreak(seed=4)
    data = observed(net, rec, n_sampled=4, observe_removal=False)
    write_observed(tmp_path, data)
    back, mask = read_observed(tmp_path / "epidemic.csv", tmp_path / "network.csv")
    assert np.array_equal(mask.obs_Y, data.mask.obs_Y)
    assert np.array_equal(mask.sampled, data.mask.sampled)
    assert np.array_equal(back.network.adjacency, data.network.adjacency)
    assert np.array_equal(back.record.infector, data.record.infector)


@pytest.mark.parametrize("body, message", [
    ("member_id,E,I,R,assessed_infector\n1,2.0,1.0,3.0,NA\n", "E must be before I"),
    ("member_id,E,I,R,assessed_infector\n1,0.0,1.0,x,NA\n", "not a number"),
    ("member_id,E,I,R,assessed_infector\n1,0,1,2,NA\n1,0,1,2,NA\n", "duplicate member_id"),
    ("member_id,E,I,R,assessed_infector\n1,0,1,2,3\n", "not an infected member"),
    ("member_id,E,I,R\n1,0,1,2\n", "header"),
    ("member_id,E,I,R,assessed_infector\n0,0,1,2,NA\n", "out of range"),
    ("member_id,E,I,R,assessed_infector\n1,0,1,2\n", "expected 5 fields"),
])
def test_malformed_epidemic_files_name_the_line(tmp_path, body, message):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ParseError, match=message) as err:
        parse_epidemic_csv(p)
    assert "bad.csv" in str(err.value)


def test_malformed_network_files(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("i,j,y\n2,1,1\n")
    with pytest.raises(ParseError, match="i < j"):
        parse_network_csv(p)
    p.write_text("i,j,y\n1,2,1\n1,2,0\n")
    with pytest.raises(ParseError, match="duplicate dyad"):
        parse_network_csv(p)
    p.write_text("i,j,y\n1,2,2\n")
    with pytest.raises(ParseError, match="0 or 1"):
        parse_network_csv(p)


def test_draws_round_trip(tmp_path):
    net, rec, _ = small_outbreak(seed=5)
    data = observed(net, rec, n_sampled=3)
    cfg = ChainConfig(iterations=40, burn_in=10, thin=10, eta_priors=EtaPriors().widened_to(
        dict(beta=1.5, eta_E_shape=4, eta_E_scale=0.25, eta_I_shape=3, eta_I_scale=0.4)))
    draws = run_chain(data, cfg, np.random.default_rng(0)).draws
    write_draws(tmp_path / "d.jsonl", draws)
    back = read_draws(tmp_path / "d.jsonl")
    for a, b in zip(draws, back):
        assert draw_to_json(a) == draw_to_json(b)
        assert a.params == b.params
        assert np.array_equal(a.mixture.sticks, b.mixture.sticks)
    obj = json.loads(draw_to_json(draws[0]))
    assert min(obj["assignments"]) >= 1


def test_draw_format_version_is_checked():
    with pytest.raises(ParseError):
        draw_from_json(json.dumps({"format_version": 99}))


def test_config_parsing():
    cfg = parse_config("# comment\ntruth.beta = 2.0\ntruth.gamma = (-2, -1, 0)\nprior.kind = flat\n"
                       "mcmc.collapse_beta = false\nprior.beta = (0, inf)\n")
    assert cfg["truth.beta"] == 2.0
    assert cfg["truth.gamma"] == (-2, -1, 0)
    assert cfg["prior.kind"] == "flat"
    assert cfg["mcmc.collapse_beta"] is False
    assert cfg["prior.beta"] == (0, math.inf)
    assert parse_config("a = 'inf'\nb = info\nc = inf\n") == {"a": "inf", "b": "info", "c": math.inf}
    with pytest.raises(ParseError):
        parse_config("a = 1\na = 2\n")
    with pytest.raises(ParseError):
        parse_config("no separator\n")
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_manifest_lists_outputs(tmp_path):
    (tmp_path / "x.csv").write_text("a\n")
    write_manifest(tmp_path, "fit", {"k": 1}, 7, "0.1.0")
    first = (tmp_path / "manifest.json").read_bytes()
    write_manifest(tmp_path, "fit", {"k": 1}, 7, "0.1.0")
    assert (tmp_path / "manifest.json").read_bytes() == first
    obj = json.loads(first)
    assert set(obj["outputs"]) == {"x.csv"}
    assert "wall_clock_seconds" not in obj
    write_manifest(tmp_path, "fit", {"k": 1}, 7, "0.1.0", wall_clock=1.5)
    assert json.loads((tmp_path / "manifest.json").read_text())["wall_clock_seconds"] == 1.5
