"""Command-line interface.

Subcommands::

    privaug run CONFIG.json [--out DIR] [overrides]
    privaug run example {rr-table,dgauss-table,linreg,toy-mixing} [--published-table]
    privaug summarize DRAWS.csv [--out SUMMARY.csv]
    privaug mech {pmf,sample} {dgauss,dlaplace} [--mu M] [--sigma S] [--t T] [--count N] [--seed K]
    privaug oracle {rr,counts} ...

Exit codes: 0 success, 2 invalid configuration or input, 3 sampler or
numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional

import jsonschema
import numpy as np

from . import __version__, diagnostics, mechanisms, oracle
from .engine import SamplerConfig, SamplerOutput, DrawsMatrix, chain_rng, sample_private_posterior
from .exceptions import ConfigError, InputError, NumericError, ParameterError, PrivaugError
from .models import regression, tables

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

MODEL_IDS = ("rr-table", "dgauss-table", "linreg", "toy-mixing")


def fmt(value: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return "%.17g" % value


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    return json.loads(resources.files("privaug").joinpath("config_schema.json").read_text())


def example_config(model: str, published_table: bool = False) -> dict:
    """Built-in configurations reproducing the worked examples."""
    if model == "rr-table":
        sdp = (
            {"table": list(tables.PUBLISHED_RR_TABLE)}
            if published_table
            else {"simulate": {"data_seed": 1, "theta": list(np.array(tables.CONFIDENTIAL_TABLE) / 400.0)}}
        )
        return {
            "model": model,
            "params": {"n": 400, "keep_prob": 0.75},
            "sdp": sdp,
            "niter": 6000,
            "warmup": 1000,
            "chains": 4,
            "seed": 123,
            "init_par": [0.25] * 4,
        }
    if model == "dgauss-table":
        sdp = (
            {"table": list(tables.PUBLISHED_DGAUSS_TABLE)}
            if published_table
            else {"simulate": {"data_seed": 1, "theta": list(np.array(tables.CONFIDENTIAL_TABLE) / 400.0)}}
        )
        return {
            "model": model,
            "params": {"n": 400, "sigma": tables.PUBLISHED_DGAUSS_SIGMA},
            "sdp": sdp,
            "niter": 2000,
            "warmup": 1000,
            "chains": 1,
            "seed": 123,
            "init_par": [0.25] * 4,
        }
    if model == "linreg":
        return {
            "model": model,
            "params": {},
            "sdp": {"simulate": {"data_seed": 1, "theta": list(regression.TRUE_BETA)}},
            "niter": 25000,
            "warmup": 1000,
            "chains": 1,
            "seed": 1,
            "init_par": [0.0, 0.0, 0.0],
        }
    if model == "toy-mixing":
        return {
            "model": model,
            "params": {"epsilon": 1.0, "sigma": 1.0},
            "sdp": {"simulate": {"data_seed": 1, "theta": [0.0]}},
            "niter": 10000,
            "warmup": 1000,
            "chains": 4,
            "seed": 1,
            "init_par": [0.0],
        }
    raise ConfigError(f"model: unknown example {model!r}")


@dataclass
class RunConfig:
    model: str
    params: dict
    sdp: dict
    sampler: SamplerConfig
    varnames: Optional[List[str]]
    out_dir: Optional[str]

    def resolved(self) -> dict:
        out = {
            "model": self.model,
            "params": self.params,
            "sdp": self.sdp,
            "niter": self.sampler.niter,
            "warmup": self.sampler.warmup,
            "chains": self.sampler.chains,
            "seed": self.sampler.seed,
            "init_par": [float(v) for v in self.sampler.init_par],
        }
        if self.varnames is not None:
            out["varnames"] = list(self.varnames)
        return out


def _default_params(model: str, params: dict) -> dict:
    params = dict(params)
    try:
        if model in ("rr-table", "dgauss-table"):
            spec = tables.TableModelSpec(
                n=params.get("n", 400),
                mechanism="rr" if model == "rr-table" else "dgauss",
                keep_prob=params.get("keep_prob", 0.75),
                sigma=params.get("sigma", tables.PUBLISHED_DGAUSS_SIGMA),
                prior=tuple(params.get("prior", (1.0, 1.0, 1.0, 1.0))),
                statistic=params.get("statistic", "matches"),
            )
            out = {"n": spec.n, "prior": list(spec.prior)}
            if model == "rr-table":
                out.update(keep_prob=spec.keep_prob, statistic=spec.statistic)
            else:
                out.update(sigma=spec.sigma)
            return out
        if model == "linreg":
            p = params.get("p", 2)
            spec = regression.RegressionModelSpec(
                n=params.get("n", 50),
                p=p,
                mu_x=tuple(params.get("mu_x", (0.9, -1.17) if p == 2 else (0.0,) * p)),
                sigma_noise=params.get("sigma_noise", 2.0),
                tau2=params.get("tau2", 4.0),
                clamp_bound=params.get("clamp_bound", 10.0),
                epsilon=params.get("epsilon", 10.0),
                sensitivity=params.get("sensitivity"),
            )
            return {
                "n": spec.n,
                "p": spec.p,
                "mu_x": list(spec.mu_x),
                "sigma_noise": spec.sigma_noise,
                "tau2": spec.tau2,
                "clamp_bound": spec.clamp_bound,
                "epsilon": spec.epsilon,
                "sensitivity": spec.sensitivity,
            }
        epsilon, sigma = params.get("epsilon", 1.0), params.get("sigma", 1.0)
        diagnostics.fraction_missing_info(epsilon, sigma)
        return {"epsilon": float(epsilon), "sigma": float(sigma)}
    except ParameterError as exc:
        raise ConfigError(f"params: {exc}") from exc


def parse_config(raw: dict, overrides: Optional[dict] = None, out_dir: Optional[str] = None) -> RunConfig:
    """Validate a raw JSON config, apply flag overrides and fill defaults."""
    raw = copy.deepcopy(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}")

    model = raw["model"]
    params = _default_params(model, raw.get("params", {}))
    npar = {"rr-table": 4, "dgauss-table": 4, "linreg": params.get("p", 2) + 1, "toy-mixing": 1}[model]
    init_par = raw.get("init_par", [0.25] * 4 if npar == 4 and model != "linreg" else [0.0] * npar)
    if len(init_par) != npar:
        raise ConfigError(f"init_par: expected {npar} values, got {len(init_par)}")
    varnames = raw.get("varnames")
    if varnames is not None and len(varnames) != npar:
        raise ConfigError(f"varnames: expected {npar} names, got {len(varnames)}")
    try:
        sampler = SamplerConfig(
            init_par=init_par,
            niter=raw.get("niter", 2000),
            warmup=raw.get("warmup"),
            chains=raw.get("chains", 1),
            seed=raw.get("seed", 0),
        )
    except ConfigError as exc:
        field_name = "warmup" if "warmup" in str(exc) else "sampler"
        raise ConfigError(f"{field_name}: {exc}") from exc
    out = out_dir if out_dir is not None else raw.get("output", {}).get("dir")
    return RunConfig(model, params, raw["sdp"], sampler, varnames, out)


def _table_spec(cfg: RunConfig) -> tables.TableModelSpec:
    p = cfg.params
    return tables.TableModelSpec(
        n=p["n"],
        mechanism="rr" if cfg.model == "rr-table" else "dgauss",
        keep_prob=p.get("keep_prob", 0.75),
        sigma=p.get("sigma", tables.PUBLISHED_DGAUSS_SIGMA),
        prior=tuple(p["prior"]),
        statistic=p.get("statistic", "matches"),
    )


def _regression_spec(cfg: RunConfig) -> regression.RegressionModelSpec:
    p = dict(cfg.params)
    p["mu_x"] = tuple(p["mu_x"])
    return regression.RegressionModelSpec(**p)


def resolve_sdp(cfg: RunConfig) -> np.ndarray:
    """The release the sampler conditions on, built from the sdp payload."""
    payload = cfg.sdp
    try:
        if "simulate" in payload:
            sim = payload["simulate"]
            rng = np.random.default_rng(sim["data_seed"])
            theta = np.asarray(sim["theta"], dtype=float)
            if cfg.model == "rr-table":
                spec = _table_spec(cfg)
                return tables.simulate_rr_release(theta, spec.n, spec.keep_prob, rng)[1]
            if cfg.model == "dgauss-table":
                spec = _table_spec(cfg)
                return tables.simulate_dgauss_release(theta, spec.n, spec.sigma, rng)[1]
            if cfg.model == "linreg":
                return regression.simulate_regression_release(_regression_spec(cfg), theta, rng)[1]
            eps, sigma = cfg.params["epsilon"], cfg.params["sigma"]
            x = theta[0] + sigma * rng.standard_normal()
            return np.array([x + rng.standard_normal() / eps])

        if "table" in payload:
            if cfg.model == "rr-table":
                records = tables.table_to_records(payload["table"])
                if len(records) != cfg.params["n"]:
                    raise ConfigError(f"sdp/table: counts sum to {len(records)} but n is {cfg.params['n']}")
                return records
            if cfg.model == "dgauss-table":
                return np.asarray(payload["table"], dtype=float)
            raise ConfigError(f"sdp/table: not supported for model {cfg.model}")

        values = np.asarray(payload["values"], dtype=float)
    except (InputError, ParameterError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"sdp: {exc}") from exc

    expected = {
        "rr-table": (cfg.params.get("n"), 2),
        "dgauss-table": (4,),
        "linreg": (regression.RegressionModelSpec(**{**cfg.params, "mu_x": tuple(cfg.params.get("mu_x", ()))}).stat_length,)
        if cfg.model == "linreg"
        else None,
        "toy-mixing": (1,),
    }[cfg.model]
    if values.shape != expected:
        raise ConfigError(f"sdp/values: expected shape {expected}, got {values.shape}")
    if cfg.model == "rr-table" and not np.all((values == 0) | (values == 1)):
        raise ConfigError("sdp/values: randomized-response release must be binary")
    return values


def build_model(cfg: RunConfig):
    if cfg.model in ("rr-table", "dgauss-table"):
        model = tables.table_model(_table_spec(cfg))
    elif cfg.model == "linreg":
        model = regression.regression_model(_regression_spec(cfg))
    else:
        return None
    if cfg.varnames is not None:
        model = type(model)(**{**model.__dict__, "varnames": tuple(cfg.varnames)})
    return model


def derived_quantities(cfg: RunConfig) -> dict:
    p = cfg.params
    if cfg.model == "rr-table":
        k = p["keep_prob"]
        return {"epsilon_per_record": 2.0 * math.log(k / (1.0 - k)) if k < 1 else math.inf}
    if cfg.model == "dgauss-table":
        # l2-sensitivity 2: rho = 2^2 / (2 sigma^2)
        rho = 2.0 / p["sigma"] ** 2
        return {"zcdp_rho": rho, "epsilon_at_delta_1e-10": mechanisms.zcdp_epsilon(rho, 1e-10)}
    if cfg.model == "linreg":
        spec = _regression_spec(cfg)
        return {"sensitivity": spec.sensitivity, "noise_scale": spec.noise_scale}
    return {"fraction_missing_info": diagnostics.fraction_missing_info(p["epsilon"], p["sigma"])}


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


class ProgressPrinter:
    """Prints per-chain iteration counts to stderr at most once a second."""

    def __init__(self, niter: int, stream=sys.stderr, interval: float = 1.0):
        self.niter = niter
        self.stream = stream
        self.interval = interval
        self.counts = {}
        self._last = 0.0
        self._lock = threading.Lock()

    def __call__(self, chain: int, iteration: int) -> None:
        with self._lock:
            self.counts[chain] = iteration
            now = time.monotonic()
            if now - self._last >= self.interval or iteration == self.niter:
                self._last = now
                status = "  ".join(f"chain {c + 1}: {it}/{self.niter}" for c, it in sorted(self.counts.items()))
                print(status, file=self.stream, flush=True)


def run_toy(cfg: RunConfig, sdp: np.ndarray, progress=None) -> SamplerOutput:
    sc = cfg.sampler
    eps, sigma = cfg.params["epsilon"], cfg.params["sigma"]
    draws, acc = [], []
    for c in range(sc.chains):
        series = diagnostics.toy_model_chain(eps, sigma, float(sdp[0]), sc.niter, chain_rng(sc.seed, c), sc.init_par[0])
        draws.append(series[sc.warmup :, None])
        acc.append(np.ones(sc.niter))
        if progress is not None:
            progress(c, sc.niter)
    names = tuple(cfg.varnames) if cfg.varnames else ("theta",)
    return SamplerOutput(DrawsMatrix(np.stack(draws), names), np.stack(acc))


def execute(cfg: RunConfig, threads: int = 1, progress=None) -> SamplerOutput:
    sdp = resolve_sdp(cfg)
    if cfg.model == "toy-mixing":
        return run_toy(cfg, sdp, progress)
    return sample_private_posterior(build_model(cfg), sdp, cfg.sampler, threads=threads, progress=progress)


def draws_csv(draws: DrawsMatrix, warmup: int) -> str:
    lines = [",".join(("chain", "iteration") + tuple(draws.varnames))]
    for c in range(draws.nchains):
        for t in range(draws.ndraws):
            vals = ",".join(fmt(v) for v in draws.values[c, t])
            lines.append(f"{c + 1},{warmup + t + 1},{vals}")
    return "\n".join(lines) + "\n"


def acceptance_csv(acceptance: np.ndarray) -> str:
    lines = ["chain,iteration,mean_alpha"]
    for c in range(acceptance.shape[0]):
        for t in range(acceptance.shape[1]):
            lines.append(f"{c + 1},{t + 1},{fmt(acceptance[c, t])}")
    return "\n".join(lines) + "\n"


def summary_csv(rows) -> str:
    lines = [",".join(diagnostics.SUMMARY_COLUMNS)]
    for row in rows:
        d = row.as_dict()
        lines.append(",".join([d["variable"]] + [fmt(d[c]) for c in diagnostics.SUMMARY_COLUMNS[1:]]))
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_outputs(cfg: RunConfig, out: SamplerOutput, out_dir: Path) -> list:
    rows = diagnostics.summarize(out.draws)
    manifest = cfg.resolved()
    manifest["varnames"] = list(out.draws.varnames)
    manifest["derived"] = derived_quantities(cfg)
    manifest["version"] = __version__
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "draws.csv", draws_csv(out.draws, cfg.sampler.warmup))
    _write(out_dir / "acceptance.csv", acceptance_csv(out.acceptance))
    _write(out_dir / "summary.csv", summary_csv(rows))
    _write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows


def read_draws_csv(path) -> DrawsMatrix:
    """Parse a draws file written by ``run`` back into a :class:`DrawsMatrix`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise InputError(f"{path}:1: empty file")
    header = lines[0].split(",")
    if header[:2] != ["chain", "iteration"] or len(header) < 3:
        raise InputError(f"{path}:1: header must start with chain,iteration and name at least one variable")
    chains: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            chain = int(parts[0])
            values = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        chains.setdefault(chain, []).append(values)
    if not chains:
        raise InputError(f"{path}:2: no draws")
    lengths = {len(v) for v in chains.values()}
    if len(lengths) != 1:
        raise InputError(f"{path}: chains have different numbers of draws")
    values = np.array([chains[c] for c in sorted(chains)], dtype=float)
    return DrawsMatrix(values, tuple(header[2:]))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    if args.target == "example":
        if args.model not in MODEL_IDS:
            raise ConfigError(f"model: choose one of {', '.join(MODEL_IDS)}")
        raw = example_config(args.model, args.published_table)
    else:
        if args.model is not None:
            raise ConfigError("unexpected extra argument after the config path")
        try:
            with open(args.target, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.target}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    overrides = {"seed": args.seed, "niter": args.niter, "warmup": args.warmup, "chains": args.chains}
    cfg = parse_config(raw, overrides, args.out)
    out_dir = Path(cfg.out_dir or "privaug-out")
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    progress = ProgressPrinter(cfg.sampler.niter) if args.progress else None
    out = execute(cfg, threads=threads, progress=progress)
    rows = write_outputs(cfg, out, out_dir)
    sys.stdout.write(diagnostics.format_table(rows))
    return EXIT_OK


def cmd_summarize(args) -> int:
    draws = read_draws_csv(args.draws)
    rows = diagnostics.summarize(draws)
    if args.out:
        _write(Path(args.out), summary_csv(rows))
    sys.stdout.write(diagnostics.format_table(rows))
    return EXIT_OK


def pmf_support(mechanism: str, args) -> np.ndarray:
    if mechanism == "dgauss":
        center = math.floor(args.mu + 0.5)
        half = math.ceil(7.5 * args.sigma) + 1
        return np.arange(center - half, center + half + 1)
    half = math.ceil(args.t * math.log(1e12)) + 1
    return np.arange(-half, half + 1)


def cmd_mech(args) -> int:
    if args.action == "pmf":
        support = pmf_support(args.mechanism, args)
        if args.mechanism == "dgauss":
            pmf = mechanisms.ddnorm(support, args.mu, args.sigma)
        else:
            pmf = mechanisms.ddlaplace(support, args.t)
        lines = ["x,pmf"] + [f"{int(x)},{fmt(p)}" for x, p in zip(support, pmf)]
    else:
        rng = np.random.default_rng(args.seed)
        if args.mechanism == "dgauss":
            draws = mechanisms.rdnorm(args.count, args.mu, args.sigma, rng)
        else:
            draws = mechanisms.rdlaplace(args.count, args.t, rng)
        if draws.size == 0:
            return EXIT_OK
        lines = ["draw"] + [str(int(d)) for d in draws]
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.kind == "rr":
        try:
            bits = np.asarray(json.loads(args.sdp), dtype=float)
        except (json.JSONDecodeError, ValueError) as exc:
            raise InputError(f"--sdp: {exc}") from exc
        mix = oracle.rr_posterior_mixture(bits, args.keep_prob)
    else:
        counts = [float(v) for v in args.sdp.split(",")]
        mix = oracle.count_posterior_mixture(counts, args.sigma, args.n)
    bins = oracle.uniform_bins(args.resolution)
    lines = ["coordinate,lower,upper,mass"]
    for j in range(mix.alphas.shape[1]):
        masses = mix.marginal_masses(j, bins.edges)
        for b in range(bins.nbins):
            lines.append(f"{j + 1},{fmt(bins.edges[b])},{fmt(bins.edges[b + 1])},{fmt(masses[b])}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privaug", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sampler from a JSON config or a built-in example")
    run.add_argument("target", help="config path, or the word 'example'")
    run.add_argument("model", nargs="?", help="example id when target is 'example'")
    run.add_argument("--published-table", action="store_true", help="use the printed noisy table as the release")
    run.add_argument("--out", help="output directory (default: config output.dir or ./privaug-out)")
    run.add_argument("--seed", type=int)
    run.add_argument("--niter", type=int)
    run.add_argument("--warmup", type=int)
    run.add_argument("--chains", type=int)
    run.add_argument("--threads", type=int, help="maximum chains run concurrently")
    run.add_argument("--progress", action="store_true", help="report iteration counts on stderr")
    run.set_defaults(func=cmd_run)

    summ = sub.add_parser("summarize", help="summarize a draws CSV")
    summ.add_argument("draws")
    summ.add_argument("--out", help="write the summary CSV here")
    summ.set_defaults(func=cmd_summarize)

    mech = sub.add_parser("mech", help="explore the discrete noise distributions")
    mech.add_argument("action", choices=("pmf", "sample"))
    mech.add_argument("mechanism", choices=("dgauss", "dlaplace"))
    mech.add_argument("--mu", type=float, default=0.0)
    mech.add_argument("--sigma", type=float, default=1.0)
    mech.add_argument("--t", type=float, default=1.0)
    mech.add_argument("--count", type=int, default=10)
    mech.add_argument("--seed", type=int, default=0)
    mech.set_defaults(func=cmd_mech)

    orc = sub.add_parser("oracle", help="exact marginal posteriors for tiny table instances")
    orc.add_argument("kind", choices=("rr", "counts"))
    orc.add_argument("--sdp", required=True, help="rr: JSON n x b bit matrix; counts: comma-separated counts")
    orc.add_argument("--keep-prob", type=float, default=0.75)
    orc.add_argument("--sigma", type=float, default=1.0)
    orc.add_argument("--n", type=int, default=1)
    orc.add_argument("--resolution", type=float, default=0.02)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrivaugError, NumericError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
