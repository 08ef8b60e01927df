import json

import pytest

from netepi.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main

SMALL = """\
truth.n_members = 12
truth.min_infected = 3
observe.n_sampled = 6
mcmc.iterations = 200
mcmc.burn_in = 50
mcmc.thin = 5
mcmc.K = 2
ppc.max_draws = 10
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(root, config, seed=3):
    sim, obs, fit, rel = (root / d for d in ("sim", "obs", "fit", "rel"))
    assert run("simulate", "--config", config, "--seed", seed, "--out", sim) == EXIT_OK
    assert run("observe", "--config", config, "--seed", seed, "--input", sim, "--out", obs) == EXIT_OK
    assert run("fit", "--config", config, "--seed", seed, "--data", obs, "--out", fit) == EXIT_OK
    assert run("relabel", "--config", config, "--seed", seed, "--draws", fit / "draws.jsonl", "--out", rel) == EXIT_OK
    for sub in ("degrees", "epidemic"):
        assert run("ppc", sub, "--config", config, "--seed", seed, "--draws", rel / "draws.jsonl",
                   "--data", obs, "--out", root / f"ppc_{sub}") == EXIT_OK
    return [sim, obs, fit, rel, root / "ppc_degrees", root / "ppc_epidemic"]


def test_full_pipeline_writes_outputs_and_figures(tmp_path, config):
    dirs = pipeline(tmp_path, config)
    fit = dirs[2]
    assert (fit / "summary.csv").read_text().startswith("parameter,mean,median,q025,q975\n")
    assert (fit / "trace.png").stat().st_size > 0
    assert (dirs[4] / "ppc_degrees.png").exists() and (dirs[5] / "ppc_epidemic.png").exists()
    manifest = json.loads((fit / "manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 3
    assert set(manifest["outputs"]) >= {"draws.jsonl", "summary.csv", "trace.png"}
    assert "wall_clock_seconds" not in manifest


def test_same_seed_gives_identical_bytes(tmp_path, config):
    a = pipeline(tmp_path / "a", config)
    b = pipeline(tmp_path / "b", config)
    for da, db in zip(a, b):
        names = sorted(p.name for p in da.iterdir() if p.suffix != ".png")
        assert names == sorted(p.name for p in db.iterdir() if p.suffix != ".png")
        for name in names:
            assert (da / name).read_bytes() == (db / name).read_bytes(), name


def test_different_seed_changes_draws(tmp_path, config):
    a = pipeline(tmp_path / "a", config, seed=1)
    b = pipeline(tmp_path / "b", config, seed=2)
    assert (a[2] / "draws.jsonl").read_bytes() != (b[2] / "draws.jsonl").read_bytes()


def test_timing_flag_records_wall_clock(tmp_path, config):
    assert run("simulate", "--config", config, "--out", tmp_path, "--timing") == EXIT_OK
    assert "wall_clock_seconds" in json.loads((tmp_path / "manifest.json").read_text())


def test_unknown_config_key_is_invalid(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mcmc.iteratons = 10\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_INVALID
    assert "unknown config key" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["fly", "--out", "x"],
    ["simulate"],
    ["simulate", "--out", "x", "--seed", "-1"],
    ["fit", "--out", "x"],
    ["relabel", "--out", "x"],
    ["ppc", "sideways", "--out", "x"],
])
def test_usage_errors_exit_with_one(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_INVALID


def test_missing_data_file_is_invalid(tmp_path):
    assert run("fit", "--data", tmp_path / "nowhere", "--out", tmp_path / "o") == EXIT_INVALID


def test_bad_gamma_estimator_is_invalid(tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("experiment.gamma_estimator = 'mode'\n")
    assert run("experiment", "coverage", "--config", cfg, "--out", tmp_path / "o") == EXIT_INVALID


def test_runtime_failure_exits_with_two(tmp_path, monkeypatch):
    import netepi.cli as cli

    def boom(*_a, **_k):
        raise RuntimeError("sampler exploded")

    monkeypatch.setattr(cli, "draw_truth", boom)
    assert run("simulate", "--out", tmp_path) == EXIT_RUNTIME


def test_dpp_demo_command(tmp_path):
    cfg = tmp_path / "d.cfg"
    cfg.write_text("dpp.n_members = 40\ndpp.n_draws = 5\n")
    assert run("experiment", "dpp-demo", "--config", cfg, "--seed", 1, "--out", tmp_path / "o") == EXIT_OK
    rows = (tmp_path / "o" / "dpp_demo.csv").read_text().splitlines()
    assert rows[0] == "draw,max_expected_degree,mean_expected_degree,min_expected_degree"
    assert len(rows) == 6
    assert (tmp_path / "o" / "dpp_demo.png").exists()


def test_small_mse_experiment(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text(SMALL + "experiment.replications = 2\nexperiment.sample_sizes = [0, 12]\n"
                   "observe.exposure = true\nprior.kind = 'widened'\n")
    assert run("experiment", "mse", "--config", cfg, "--seed", 4, "--out", tmp_path / "o") == EXIT_OK
    lines = (tmp_path / "o" / "mse.csv").read_text().splitlines()
    assert lines[0] == "n,parameter,mse_median,mse_mean"
    assert any(line.startswith("12,gamma_1,") for line in lines)
