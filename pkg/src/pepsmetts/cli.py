"""Batch driver: configure, run, checkpoint and export METTS /
purification / exact-oracle computations.

Config is one flat JSON document; every key has a matching CLI flag which
overrides the file value. Each METTS chain streams JSON-line events to its
own log file (append-only, one writer per file), so a run is reproducible
byte-for-byte from (config, seed); wall-clock timestamps only ever go to
meta.json.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import observables as obs
from .evolution import NtuOpts, make_schedule
from .exact import gibbs_energy, gibbs_expectation
from .lattice import PepsState, product_state
from .models import SX, SZ, ModelSpec, tfim
from .purification import evolve_purification, init_infinite_temperature
from .sampler import ReplayableRng, metts_step
from .stats import (
    ChainRecord,
    autocorrelation,
    bunched_error,
    running_average,
    serialize,
)

CHECKPOINT_VERSION = 1


@dataclass
class RunConfig:
    model: str = "tfim"
    g: float = 2.9
    lx: int = 3
    ly: int = 3
    beta: float = 1.0 / 0.6085
    dtau: float = 0.01
    D: int = 3
    chi: int = 16
    chi_sample: int | None = None
    n_chains: int = 1
    steps: int = 100
    seed: int = 1234
    burn_in: int = 10
    observables: list[str] = dataclasses.field(default_factory=lambda: ["C1", "C2"])
    out_dir: str = ""
    n_workers: int = 1
    checkpoint_every: int = 25
    als_tol: float = 1e-10
    als_max_sweeps: int = 50
    log_ntu: bool = True

    def spec(self) -> ModelSpec:
        if self.model != "tfim":
            raise ValueError(f"unsupported model {self.model!r}")
        return tfim(self.g, self.lx, self.ly)

    def ntu_opts(self) -> NtuOpts:
        return NtuOpts(max_sweeps=self.als_max_sweeps, tol=self.als_tol)

    def resolved_out_dir(self) -> Path:
        out = self.out_dir or os.environ.get("PEPSMETTS_OUT", "runs")
        return Path(out)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


def _json_line(fh, obj) -> None:
    fh.write(json.dumps(obj, separators=(",", ":"), sort_keys=True))
    fh.write("\n")


def _chain_log_path(out_dir: Path, chain: int) -> Path:
    return out_dir / f"chain_{chain:02d}.jsonl"


def _checkpoint_path(out_dir: Path, chain: int) -> Path:
    return out_dir / f"chain_{chain:02d}_ckpt.peps"


def run_chain(config: RunConfig, chain: int, resume: bool = False) -> dict:
    """One METTS Markov chain; streams events to its own JSON-lines log."""
    spec = config.spec()
    schedule = make_schedule(spec, config.beta / 2.0, config.dtau)
    opts = config.ntu_opts()
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = _chain_log_path(out_dir, chain)
    seed = config.seed + chain

    start_step = 0
    grid = np.zeros((config.lx, config.ly), dtype=np.int64)  # all spins up
    rng = ReplayableRng(seed)
    kept_lines: list[str] = []
    if resume and _checkpoint_path(out_dir, chain).exists():
        state, sidecar = PepsState.load(_checkpoint_path(out_dir, chain))
        if sidecar.get("checkpoint_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint version mismatch at {_checkpoint_path(out_dir, chain)}"
            )
        start_step = int(sidecar["step"])
        grid = np.array(sidecar["next_config"], dtype=np.int64)
        rng = ReplayableRng(seed, draws=int(sidecar["draws"]))
        with open(log_path) as fh:
            for line in fh:
                event = json.loads(line)
                if event.get("type") == "config":
                    continue  # rewritten below with the current config
                if event.get("step", -1) <= start_step:
                    kept_lines.append(line)

    mode = "w"
    with open(log_path, mode) as fh:
        _json_line(
            fh,
            {
                "type": "config",
                "chain": chain,
                "seed": seed,
                **{
                    k: v
                    for k, v in dataclasses.asdict(config).items()
                    if k not in ("out_dir", "seed")
                },
                "base_seed": config.seed,
            },
        )
        if resume and kept_lines:
            fh.writelines(kept_lines)
        else:
            _json_line(
                fh,
                {
                    "type": "sample",
                    "chain": chain,
                    "step": 0,
                    "config": ["".join(str(v) for v in row) for row in grid],
                    "log_prob": 0.0,
                    "draws_before": 0,
                    "draws_after": 0,
                },
            )
        for step in range(start_step + 1, config.steps + 1):
            values, sample, reports = metts_step(
                grid,
                spec,
                schedule,
                config.D,
                config.chi,
                rng,
                config.observables,
                chi_sample=config.chi_sample,
                opts=opts,
            )
            if config.log_ntu:
                for rep in reports:
                    _json_line(
                        fh,
                        {
                            "type": "ntu_report",
                            "chain": chain,
                            "step": step,
                            "bond": rep.bond,
                            "delta": rep.delta,
                            "iters": rep.iters,
                        },
                    )
            _json_line(
                fh,
                {
                    "type": "step",
                    "chain": chain,
                    "step": step,
                    "values": values,
                },
            )
            grid = sample.config
            _json_line(
                fh,
                {
                    "type": "sample",
                    "chain": chain,
                    "step": step,
                    "config": sample.config_strings(),
                    "log_prob": sample.log_prob,
                    "draws_before": sample.draws_before,
                    "draws_after": sample.draws_after,
                },
            )
            if config.checkpoint_every and step % config.checkpoint_every == 0:
                ckpt = _checkpoint_path(out_dir, chain)
                product_state(config.lx, config.ly, grid, spec.d).save(
                    ckpt,
                    extra={
                        "checkpoint_version": CHECKPOINT_VERSION,
                        "chain": chain,
                        "step": step,
                        "next_config": [[int(v) for v in row] for row in grid],
                        "draws": rng.draws,
                    },
                )
                _json_line(
                    fh,
                    {
                        "type": "checkpoint",
                        "chain": chain,
                        "step": step,
                        "path": ckpt.name,
                    },
                )
    return {"chain": chain, "steps": config.steps, "log": str(log_path)}


def run_metts(config: RunConfig, resume: bool = False) -> list[dict]:
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(
            {
                "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "kind": "metts",
                "config": dataclasses.asdict(config),
            },
            fh,
            indent=1,
            sort_keys=True,
        )
    chains = list(range(config.n_chains))
    if config.n_workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            futures = [
                pool.submit(run_chain, config, chain, resume) for chain in chains
            ]
            return [f.result() for f in futures]
    return [run_chain(config, chain, resume) for chain in chains]


def run_purification(config: RunConfig) -> dict:
    spec = config.spec()
    schedule = make_schedule(spec, config.beta / 2.0, config.dtau)
    state = init_infinite_temperature(config.lx, config.ly, spec.d)
    evolved, reports = evolve_purification(
        state, spec, schedule, config.D, config.ntu_opts()
    )
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    from .zipper import boundaries_all_rows

    zip_log: list[str] = []
    boundaries_all_rows(evolved, config.chi, diagnostics=zip_log)
    with open(out_dir / "zip_diagnostics.jsonl", "w") as fh:
        fh.write("\n".join(zip_log) + "\n")
    env = obs.BoundaryEnv(evolved, config.chi)
    values = obs.measure_named(
        evolved, config.observables, config.g, config.chi, env=env
    )
    result = {
        "kind": "purification",
        "config": dataclasses.asdict(config),
        "values": values,
        "max_ntu_delta": max((r.delta for r in reports), default=0.0),
        "n_gates": len(reports),
    }
    with open(out_dir / "purification.json", "w") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
    evolved.save(out_dir / "purification.peps", extra={"beta": config.beta})
    return result


def run_exact(config: RunConfig) -> dict:
    """Reference thermal values from the dense oracle, as JSON."""
    spec = config.spec()
    values: dict[str, float] = {}
    center = ((config.lx - 1) // 2, (config.ly - 1) // 2)
    for name in config.observables:
        if name.startswith("C") and name[1:].isdigit():
            a, b = obs.cr_sites(config.lx, config.ly, int(name[1:]))
            values[name] = gibbs_expectation(spec, config.beta, [(a, SZ), (b, SZ)])
        elif name == "sz":
            values[name] = gibbs_expectation(spec, config.beta, [(center, SZ)])
        elif name == "sx":
            values[name] = gibbs_expectation(spec, config.beta, [(center, SX)])
        elif name == "energy":
            values[name] = gibbs_energy(spec, config.beta)
        else:
            raise ValueError(f"unknown observable {name!r}")
    result = {"kind": "exact", "config": dataclasses.asdict(config), "values": values}
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "exact.json", "w") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
    return result


DEFAULT_BURN_IN_SENTINEL = 10


def read_chain_records(paths: list[str | Path], burn_in: int | None = None):
    """Parse run-log JSON lines into ChainRecords; malformed lines abort
    with their line number."""
    records = []
    for path in paths:
        steps: list[int] = []
        values: dict[str, list[float]] = {}
        chain_id, seed, cfg_burn = 0, 0, DEFAULT_BURN_IN_SENTINEL
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                    etype = event["type"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed log line: {exc}")
                if etype == "config":
                    chain_id = event.get("chain", 0)
                    seed = event.get("seed", 0)
                    cfg_burn = event.get("burn_in", cfg_burn)
                elif etype == "step":
                    steps.append(event["step"])
                    for name, val in event["values"].items():
                        values.setdefault(name, []).append(val)
        if steps:
            records.append(
                ChainRecord(
                    chain_id=chain_id,
                    seed=seed,
                    steps=steps,
                    values=values,
                    burn_in=burn_in if burn_in is not None else cfg_burn,
                )
            )
    if not records:
        raise ValueError("no step records found in the given logs")
    return records


def analyze(
    paths: list[str | Path],
    out_csv: str | Path,
    confidence: float = 0.95,
    burn_in: int | None = None,
    max_lag: int = 50,
) -> Path:
    """Chain statistics to CSV: columns (observable, s, mean, stderr, tau).

    mean is the running average over the first s serialized post-burn-in
    samples; stderr is the bunched error of those samples at the requested
    confidence (empty below 16 samples); tau is the integrated
    autocorrelation time of the full series.
    """
    records = read_chain_records(paths, burn_in=burn_in)
    names = sorted(records[0].values.keys())
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["observable", "s", "mean", "stderr", "tau"])
        for name in names:
            series = running_average(records, name)
            lag = min(max_lag, max(1, (len(series) - 1) // 5))
            try:
                _, tau = autocorrelation(records, name, max_lag=lag)
            except ValueError:
                tau = float("nan")
            samples = serialize(records, name)
            for s, mean in series:
                if s >= 16:
                    sub = ChainRecord(
                        chain_id=0,
                        seed=0,
                        steps=list(range(1, s + 1)),
                        values={name: list(samples[:s])},
                        burn_in=0,
                    )
                    err = bunched_error([sub], name, confidence=confidence).stderr
                    err_str = f"{err:.10g}"
                else:
                    err_str = ""
                writer.writerow([name, s, f"{mean:.12g}", err_str, f"{tau:.6g}"])
    return out_csv


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pepsmetts",
        description="Thermal expectation values of 2D spin models: "
        "PEPS-METTS sampling and purification benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--g", type=float)
        p.add_argument("--lx", type=int)
        p.add_argument("--ly", type=int)
        p.add_argument("--beta", type=float)
        p.add_argument("--dtau", type=float)
        p.add_argument("--D", type=int)
        p.add_argument("--chi", type=int)
        p.add_argument("--chi-sample", dest="chi_sample", type=int)
        p.add_argument("--n-chains", dest="n_chains", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--observables", nargs="+")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--n-workers", dest="n_workers", type=int)
        p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
        p.add_argument("--als-tol", dest="als_tol", type=float)
        p.add_argument("--als-max-sweeps", dest="als_max_sweeps", type=int)

    p_metts = sub.add_parser("metts", help="run METTS Markov chains")
    add_config_flags(p_metts)
    p_metts.add_argument("--resume", action="store_true")

    p_pur = sub.add_parser("purify", help="run the purification benchmark")
    add_config_flags(p_pur)

    p_exact = sub.add_parser("exact", help="dense-oracle reference values")
    add_config_flags(p_exact)

    p_an = sub.add_parser("analyze", help="chain statistics to CSV")
    p_an.add_argument("logs", nargs="+", help="chain_*.jsonl run logs")
    p_an.add_argument("--out", required=True, help="output CSV path")
    p_an.add_argument("--confidence", type=float, default=0.95)
    p_an.add_argument("--burn-in", dest="burn_in", type=int)
    p_an.add_argument("--max-lag", dest="max_lag", type=int, default=50)

    args = parser.parse_args(argv)
    if args.command == "analyze":
        out = analyze(
            args.logs,
            args.out,
            confidence=args.confidence,
            burn_in=args.burn_in,
            max_lag=args.max_lag,
        )
        print(f"wrote {out}")
        return 0

    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "resume") and v is not None
    }
    config = load_config(args.config, overrides)
    if args.command == "metts":
        results = run_metts(config, resume=getattr(args, "resume", False))
        for r in results:
            print(f"chain {r['chain']}: {r['steps']} steps -> {r['log']}")
    elif args.command == "purify":
        result = run_purification(config)
        print(json.dumps(result["values"], indent=1, sort_keys=True))
    elif args.command == "exact":
        result = run_exact(config)
        print(json.dumps(result["values"], indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
