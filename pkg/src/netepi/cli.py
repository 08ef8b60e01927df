"""Command-line entry point: ``netepi <command> --config FILE --seed N --out DIR``.

Exit status is 0 on success, 1 on invalid input or usage and 2 when a run
fails after its inputs were accepted.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io as _io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .data import ObservedData
from .epidemic import max_infectious
from .experiments import (ObserveConfig, Truth, TruthConfig, apply_design, coverage_experiment, draw_truth, dpp_demo,
                          fit_priors, mse_experiment, scaled_sizes)
from .io import (atomic_write, parse_config, parse_epidemic_csv, parse_network_csv, read_draws, read_observed,
                 write_draws, write_epidemic_csv, write_manifest, write_network_csv)
from .mcmc import ChainConfig, EtaPriors, ProposalScales, run_chain
from .model import Hyperpriors, degrees
from .observation import validate_mask
from .ppc import long_format, ppc_degrees, ppc_epidemic_max, predictive_interval
from .relabel import relabel

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

CONFIG_KEYS = {
    "truth": {"n_members", "gamma", "proportions", "sizes", "mse_design", "beta", "eta_E", "eta_I",
              "min_infected"},
    "observe": {"n_sampled", "waves", "exposure", "infectious", "removal", "transmissions"},
    "mcmc": {"iterations", "burn_in", "thin", "K", "proposal_gamma", "proposal_eta", "proposal_times", "proposal_rescale",
             "transmission_prior", "store_latent", "debug", "collapse_beta", "adapt"},
    "hyper": {"alpha_shape", "alpha_rate", "mean_loc", "mean_var", "prec_shape", "prec_rate"},
    "prior": {"kind", *EtaPriors.names()},
    "experiment": {"replications", "sample_sizes", "workers", "level", "gamma_estimator"},
    "dpp": {"alpha", "mu", "sigma2", "n_members", "n_draws"},
    "ppc": {"max_draws", "level"},
    "data": {"population_size"},
}


class InvalidInput(Exception):
    """Bad arguments, configuration or input files."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INVALID)


@contextlib.contextmanager
def _validating():
    try:
        yield
    except InvalidInput:
        raise
    except (ValueError, KeyError, TypeError, OSError) as exc:
        raise InvalidInput(str(exc)) from exc


# ---------------------------------------------------------------------------
# Config helpers
# ---------------------------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    for key in cfg:
        section, _, name = key.partition(".")
        if name not in CONFIG_KEYS.get(section, ()):
            raise InvalidInput(f"unknown config key {key!r}")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}


def _truth(cfg: dict) -> TruthConfig:
    t = _section(cfg, "truth")
    kwargs = {k: v for k, v in t.items() if k not in ("mse_design",)}
    for key in ("gamma", "proportions", "sizes", "eta_E", "eta_I"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    if t.get("mse_design"):
        kwargs["sizes"] = scaled_sizes(kwargs.get("n_members", TruthConfig.n_members))
        kwargs.setdefault("gamma", (-3.5, -1.5, 0.5))
    return TruthConfig(**kwargs)


def _observe(cfg: dict) -> ObserveConfig:
    return ObserveConfig(**_section(cfg, "observe"))


def _chain(cfg: dict, seed: int, priors: EtaPriors | None = None) -> ChainConfig:
    m = _section(cfg, "mcmc")
    scales = ProposalScales(**{k[len("proposal_"):]: m.pop(k) for k in list(m) if k.startswith("proposal_")})
    mode = m.pop("transmission_prior", "uniform")
    mode = {"a": "doctor", "b": "uniform"}.get(mode, mode)
    return ChainConfig(hyperpriors=Hyperpriors(**_section(cfg, "hyper")), eta_priors=priors or _priors(cfg),
                       proposal_scales=scales, seed=seed, transmission_prior_mode=mode, **m)


def _priors(cfg: dict, truth: TruthConfig | None = None) -> EtaPriors:
    p = _section(cfg, "prior")
    kind = p.pop("kind", "default")
    base = EtaPriors(**{k: tuple(v) for k, v in p.items()})
    if kind == "default":
        return base
    if truth is None:
        raise InvalidInput(f"prior.kind = {kind} needs a data-generating truth")
    return fit_priors(kind, truth, base)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _jsonl(objs) -> str:
    return "".join(json.dumps(o, separators=(",", ":"), allow_nan=False) + "\n" for o in objs)


def _finish(args, out: Path, config: dict, extra: dict | None = None, started: float | None = None):
    wall = time.perf_counter() - started if (args.timing and started is not None) else None
    write_manifest(out, args.command if not getattr(args, "sub", None) else f"{args.command} {args.sub}",
                   config, args.seed, __version__, extra, wall)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args, cfg, out):
    with _validating():
        truth_cfg = _truth(cfg)
    rng = np.random.default_rng(args.seed)
    truth = draw_truth(truth_cfg, rng)
    write_epidemic_csv(out / "epidemic.csv", truth.record)
    write_network_csv(out / "network.csv", truth.network)
    sidecar = {
        "format_version": 1,
        "n_members": truth_cfg.n_members,
        "assignments": (truth.assignments + 1).tolist(),
        "theta": truth.theta.tolist(),
        "gamma": list(truth_cfg.gamma),
        "params": truth_cfg.params.as_dict(),
        "infector": [int(t) + 1 if t >= 0 else int(t) for t in truth.record.infector.tolist()],
        "max_infectious": max_infectious(truth.record),
    }
    atomic_write(out / "truth.json", json.dumps(sidecar, indent=1) + "\n")
    return {"n_infected": truth.record.n_infected}


def _read_complete(directory: Path):
    record, fields, assessments = parse_epidemic_csv(directory / "epidemic.csv")
    network, observed = parse_network_csv(directory / "network.csv", record.n_members)
    if not all(fields[k][record.infected].all() for k in "EIRT") or not observed[~np.eye(len(observed), dtype=bool)].all():
        raise InvalidInput(f"{directory}: observe needs complete data (all times, infectors and dyads)")
    return record, network, assessments


def cmd_observe(args, cfg, out):
    with _validating():
        if args.input is None:
            raise InvalidInput("observe needs --input DIR with complete epidemic.csv and network.csv")
        record, network, assessments = _read_complete(Path(args.input))
        observe = _observe(cfg)
    truth = Truth(np.zeros(record.n_members, dtype=np.int64), np.zeros(record.n_members), network, record)
    data = apply_design(truth, observe, np.random.default_rng(args.seed))
    write_epidemic_csv(out / "epidemic.csv", data.record, data.mask, assessments)
    write_network_csv(out / "network.csv", network, data.mask.obs_Y)
    atomic_write(out / "mask.json", json.dumps(data.mask.to_dict(record.infected), indent=1) + "\n")
    return {"latent": data.latent_counts(), "observed_dyads": data.mask.n_observed_dyads()}


def _load_data(args, cfg) -> ObservedData:
    if args.data is None:
        raise InvalidInput("fit needs --data DIR containing epidemic.csv (and optionally network.csv)")
    d = Path(args.data)
    net = d / "network.csv"
    data, _ = read_observed(d / "epidemic.csv", net if net.exists() else None,
                            _section(cfg, "data").get("population_size"))
    return data


SUMMARY_PARAMETERS = ("beta", "eta_E_shape", "eta_E_scale", "eta_I_shape", "eta_I_scale", "alpha", "mu", "sigma2")


def cmd_fit(args, cfg, out):
    with _validating():
        data = _load_data(args, cfg)
        chain = _chain(cfg, args.seed)
        diag = validate_mask(data.mask, data.record, data.network)
        if diag.hard:
            raise InvalidInput("; ".join(diag.hard))
    output = run_chain(data, chain)
    write_draws(out / "draws.jsonl", output.draws)
    rows = []
    for name in SUMMARY_PARAMETERS:
        x = output.trace(name)
        if x.size:
            q = np.quantile(x, [0.025, 0.5, 0.975])
            rows.append((name, float(x.mean()), float(q[1]), float(q[0]), float(q[2])))
    atomic_write(out / "summary.csv", _csv_text(("parameter", "mean", "median", "q025", "q975"), rows))
    atomic_write(out / "diagnostics.txt", "".join(line + "\n" for line in output.diagnostics))
    if output.draws:
        plotting.trace_figure({n: output.trace(n) for n in SUMMARY_PARAMETERS[:5]}, out / "trace.png")
    return {"acceptance": output.acceptance, "n_draws": len(output.draws), "latent": data.latent_counts()}


def _read_draws_arg(args):
    if args.draws is None:
        raise InvalidInput("--draws FILE is required")
    return read_draws(args.draws)


def cmd_relabel(args, cfg, out):
    with _validating():
        draws = _read_draws_arg(args)
    new, report = relabel(draws)
    write_draws(out / "draws.jsonl", new)
    atomic_write(out / "relabel_report.json", json.dumps(report.to_dict()) + "\n")
    return {"converged": report.converged, "outer_iterations": len(report.loss_trajectory)}


def cmd_ppc(args, cfg, out):
    with _validating():
        draws = _read_draws_arg(args)
        if not draws:
            raise InvalidInput("no draws to check")
        p = _section(cfg, "ppc")
        max_draws = p.get("max_draws")
        level = float(p.get("level", 0.9))
        observed = None
        if args.data is not None:
            observed = _load_data(args, cfg)
    rng = np.random.default_rng(args.seed)
    if args.sub == "degrees":
        hist = ppc_degrees(draws, rng, max_draws)
        atomic_write(out / "ppc_degrees.jsonl", _jsonl({"draw": t, "histogram": h.tolist()} for t, h in enumerate(hist)))
        rows = [r for t, h in enumerate(hist) for r in long_format("degree_count", h, str(t))]
        atomic_write(out / "ppc_degrees.csv", _csv_text(("variable", "value", "group"), rows))
        obs_hist = None
        if observed is not None and observed.mask.sampled.all():
            obs_hist = np.bincount(degrees(observed.network), minlength=observed.n_members)
        plotting.degree_ppc_figure(hist, out / "ppc_degrees.png", obs_hist)
        return {"draws_used": len(hist)}
    samples = ppc_epidemic_max(draws, rng, max_draws)
    lo, hi = predictive_interval(samples, level)
    atomic_write(out / "ppc_epidemic.jsonl", _jsonl({"draw": t, "max_infectious": int(v)} for t, v in enumerate(samples)))
    atomic_write(out / "ppc_epidemic.csv", _csv_text(("variable", "value", "group"), long_format("max_infectious", samples)))
    obs = None
    if observed is not None:
        rec = observed.record
        inf = rec.infected
        if np.all(np.isfinite(rec.infectious[inf])) and np.all(np.isfinite(rec.removal[inf])):
            obs = max_infectious(rec)
    plotting.epidemic_ppc_figure(samples, out / "ppc_epidemic.png", obs, (lo, hi))
    return {"interval": [lo, hi], "level": level, "observed": obs}


def cmd_experiment(args, cfg, out):
    with _validating():
        e = _section(cfg, "experiment")
        workers = int(e.get("workers", 1))
        if args.sub == "dpp-demo":
            d = _section(cfg, "dpp")
            alpha, mu, sigma2 = float(d.get("alpha", 5.0)), float(d.get("mu", -5.0)), float(d.get("sigma2", 25.0))
            n, n_draws = int(d.get("n_members", 1000)), int(d.get("n_draws", 100))
        else:
            truth = _truth(cfg)
            chain = _chain(cfg, args.seed, _priors(cfg, truth))
            observe = _observe(cfg)
            replications = int(e.get("replications", 50))
            gamma = str(e.get("gamma_estimator", "members"))
            if gamma not in ("members", "aligned"):
                raise ValueError(f"experiment.gamma_estimator must be members or aligned, got {gamma!r}")
    if args.sub == "dpp-demo":
        draws = dpp_demo(alpha, mu, sigma2, n, n_draws, np.random.default_rng(args.seed))
        rows = [(t, float(np.max(ed)), float(np.mean(ed)), float(np.min(ed))) for t, (_, ed) in enumerate(draws)]
        atomic_write(out / "dpp_demo.csv", _csv_text(("draw", "max_expected_degree", "mean_expected_degree",
                                                      "min_expected_degree"), rows))
        atomic_write(out / "dpp_demo.jsonl", _jsonl({"draw": t, "theta": th.tolist(), "expected_degree": ed.tolist()}
                                                    for t, (th, ed) in enumerate(draws)))
        plotting.dpp_figure([ed for _, ed in draws], out / "dpp_demo.png")
        maxes = [r[1] for r in rows]
        return {"min_of_max": min(maxes), "max_of_max": max(maxes)}
    if args.sub == "coverage":
        level = float(e.get("level", 0.95))
        table = coverage_experiment(truth, replications, chain, observe, args.seed, workers, level, gamma)
        atomic_write(out / "coverage.csv", _csv_text(("parameter", "replications", "coverage", "mean_width"),
                                                     [tuple(r.values()) for r in table.rows]))
        if table.rows:
            plotting.coverage_figure(table.rows, level, out / "coverage.png")
        return {"failures": [list(f) for f in table.failures]}
    sizes = e.get("sample_sizes")
    if sizes is None:
        sizes = sorted({0, *range(0, truth.n_members, 25), truth.n_members})
    with _validating():
        curve = mse_experiment(truth, sizes, replications, chain, observe, args.seed, workers, gamma)
    atomic_write(out / "mse.csv", _csv_text(("n", "parameter", "mse_median", "mse_mean"),
                                            [(r["n"], r["parameter"], r["mse_median"], r["mse_mean"]) for r in curve.rows]))
    if curve.rows:
        plotting.mse_figure(curve.rows, out / "mse.png")
    return {"failures": [list(f) for f in curve.failures]}


COMMANDS = {"simulate": cmd_simulate, "observe": cmd_observe, "fit": cmd_fit, "relabel": cmd_relabel,
            "ppc": cmd_ppc, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netepi", description="Network SEIR epidemics with a Dirichlet-process degree model.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--timing", action="store_true", help="record wall-clock time in the manifest")
        return p

    common(subs.add_parser("simulate", help="simulate a population, contact network and epidemic"))
    p = common(subs.add_parser("observe", help="apply a sampling design to complete data"))
    p.add_argument("--input", help="directory written by simulate")
    p = common(subs.add_parser("fit", help="run the posterior sampler"))
    p.add_argument("--data", help="directory with epidemic.csv and optional network.csv")
    p = common(subs.add_parser("relabel", help="undo label switching in chain draws"))
    p.add_argument("--draws", help="draws.jsonl written by fit")
    p = common(subs.add_parser("ppc", help="posterior-predictive checks"))
    p.add_argument("sub", choices=("degrees", "epidemic"))
    p.add_argument("--draws", help="draws.jsonl written by fit or relabel")
    p.add_argument("--data", help="observed data directory, drawn into the figure when complete enough")
    p = common(subs.add_parser("experiment", help="simulation studies"))
    p.add_argument("sub", choices=("coverage", "mse", "dpp-demo"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    if not 0 <= args.seed < 2 ** 64:
        sys.stderr.write("netepi: error: --seed must be an unsigned 64-bit integer\n")
        return EXIT_INVALID
    started = time.perf_counter()
    out = Path(args.out)
    try:
        with _validating():
            cfg = _load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, cfg, out)
        _finish(args, out, cfg, {"result": extra} if extra else None, started)
    except InvalidInput as exc:
        sys.stderr.write(f"netepi: invalid input: {exc}\n")
        return EXIT_INVALID
    except Exception as exc:  # reported, not re-raised: the exit status carries the failure
        sys.stderr.write(f"netepi: run failed: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
