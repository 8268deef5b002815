"""Command-line harness: ``run``, ``oracle``, ``gen-env`` and ``check``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .checks import format_table, run_checks
from .driver import run_summary, summary_json, varac_run, write_metrics_csv
from .envs import FAMILIES, EnvSpec, generate
from .errors import ConfigError, MdpFormatError, SpecInvalid, VaracError
from .io import atomic_write_text
from .learner import LearnerConfig, NetSpec
from .mdp import TabularMdp, load_mdp
from .oracle import SaddleSolution, saddle_search

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

_NETS = ("actor_net", "q_net", "w_net")
_LEARNER_TYPES = {f.name: f.type for f in fields(LearnerConfig) if f.name not in _NETS + ("seed",)}
_ENV_TYPES = {f.name: f.type for f in fields(EnvSpec)}


@dataclass
class RunConfig:
    learner: LearnerConfig
    env_path: Optional[str] = None
    env_spec: Optional[EnvSpec] = None
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    oracle: bool = False
    lambda_res: float = 0.01
    y_res: float = 0.01

    def load_env(self) -> TabularMdp:
        if self.env_path is not None:
            return load_mdp(self.env_path)
        return generate(self.env_spec)


def _convert(key: str, raw: str, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "int":
            return int(raw)
        if "float" in typ:
            if raw.lower() in ("none", "") and "Optional" in typ:
                return None
            return float(raw)
        if typ == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None
    return raw


def parse_config(text: str, base_dir: str | os.PathLike = ".") -> RunConfig:
    """Parse the flat ``key = value`` format; ``#`` starts a comment."""
    learner: dict = {}
    nets: dict = {n: {} for n in _NETS}
    env: dict = {}
    top: dict = {}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{key}: duplicate key on line {lineno}")
        seen.add(key)
        parts = key.split(".")
        if parts[0] == "learner" and len(parts) == 2 and parts[1] in _LEARNER_TYPES:
            learner[parts[1]] = _convert(key, raw, _LEARNER_TYPES[parts[1]])
        elif parts[0] == "learner" and len(parts) == 3 and parts[1] in _NETS and parts[2] in ("m", "H", "R"):
            nets[parts[1]][parts[2]] = _convert(key, raw, "float" if parts[2] == "R" else "int")
        elif parts[0] == "env" and len(parts) == 2 and (parts[1] == "path" or parts[1] in _ENV_TYPES):
            env[parts[1]] = raw if parts[1] == "path" else _convert(key, raw, _ENV_TYPES[parts[1]])
        elif key == "seeds":
            top["seeds"] = _parse_seeds(raw, key)
        elif key == "out_dir":
            top["out_dir"] = raw
        elif key == "oracle":
            top["oracle"] = _convert(key, raw, "bool")
        elif key in ("oracle.lambda_res", "oracle.y_res"):
            top[parts[1]] = _convert(key, raw, "float")
            if not top[parts[1]] > 0:
                raise ConfigError(f"{key} must be positive")
        else:
            raise ConfigError(f"{key}: unknown key")

    for name, spec in nets.items():
        if spec:
            try:
                learner[name] = NetSpec(**spec)
            except TypeError as exc:
                raise ConfigError(f"learner.{name}: {exc}") from None
    try:
        lcfg = LearnerConfig(**learner)
    except ConfigError as exc:
        raise ConfigError(f"learner.{exc}") from None

    cfg = RunConfig(learner=lcfg, **top)
    if "path" in env:
        if len(env) > 1:
            raise ConfigError("env.path cannot be combined with generator keys")
        path = Path(env["path"])
        cfg.env_path = str(path if path.is_absolute() else Path(base_dir) / path)
    else:
        try:
            cfg.env_spec = EnvSpec(**env)
            generate(cfg.env_spec)
        except SpecInvalid as exc:
            raise ConfigError(f"env: {exc}") from None
    return cfg


def _parse_seeds(raw: str, key: str = "--seeds") -> list:
    try:
        seeds = [int(s) for s in raw.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError(f"{key}: need at least one non-negative seed")
    return seeds


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    return parse_config(text, Path(path).parent)


def _run_seed(mdp: TabularMdp, lcfg: LearnerConfig, oracle: Optional[SaddleSolution], out: Path) -> str:
    final, metrics = varac_run(mdp, lcfg, oracle)
    write_metrics_csv(out / f"metrics_seed{lcfg.seed}.csv", metrics)
    summary = run_summary(mdp, lcfg, final, metrics, oracle)
    atomic_write_text(out / f"summary_seed{lcfg.seed}.json", summary_json(summary))
    return f"seed {lcfg.seed}: {len(metrics)} iterations, final lambda {final.lambda_bar:.4f}"


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seeds:
            cfg.seeds = _parse_seeds(args.seeds)
        if args.out:
            cfg.out_dir = args.out
        mdp = cfg.load_env()
    except (ConfigError, MdpFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: out_dir: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        oracle = None
        if cfg.oracle:
            oracle = saddle_search(mdp, cfg.learner.alpha, cfg.learner.N, cfg.lambda_res, cfg.y_res)
            atomic_write_text(out / "saddle.json", json.dumps(oracle.to_dict(), indent=2) + "\n")
        jobs = [replace(cfg.learner, seed=s) for s in cfg.seeds]
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_run_seed, mdp, j, oracle, out) for j in jobs]
                lines = [f.result() for f in futures]
        else:
            lines = [_run_seed(mdp, j, oracle, out) for j in jobs]
    except (VaracError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        mdp = load_mdp(args.env)
        if args.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if not (args.n_cap > 0 and args.lambda_res > 0 and args.y_res > 0):
            raise ConfigError("n-cap and grid resolutions must be positive")
    except (ConfigError, MdpFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sol = saddle_search(mdp, args.alpha, args.n_cap, args.lambda_res, args.y_res)
    except (VaracError, ArithmeticError, RuntimeError) as exc:
        print(f"oracle failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(sol.to_dict(), indent=2))
    return EXIT_OK


def cmd_gen_env(args) -> int:
    kwargs = {"family": args.family, "seed": args.seed}
    for name in ("n_states", "n_actions", "mix"):
        if getattr(args, name) is not None:
            kwargs[name] = getattr(args, name)
    if args.family == "gridworld":
        kwargs.setdefault("n_actions", 4)
        kwargs.setdefault("n_states", 12)
    elif args.family == "portfolio":
        kwargs.update(n_states=3, n_actions=2)
    try:
        mdp = generate(EnvSpec(**kwargs))
    except SpecInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        mdp.save(args.out)
    except OSError as exc:
        print(f"cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.family} MDP with {mdp.n_states} states and {mdp.n_actions} actions to {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(-1.0 if args.corrupt_tolerance else 1.0)
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_CHECK
    print(f"all {len(results)} properties passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varac", description="Variance-constrained actor-critic toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the learner for each seed in a config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides out_dir)")
    r.add_argument("--seeds", help="comma-separated seeds (overrides the config)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for independent seeds")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="grid saddle-point search on an MDP file")
    o.add_argument("--env", required=True)
    o.add_argument("--alpha", type=float, required=True)
    o.add_argument("--n-cap", type=float, required=True)
    o.add_argument("--lambda-res", type=float, default=0.01)
    o.add_argument("--y-res", type=float, default=0.01)
    o.set_defaults(func=cmd_oracle)

    g = sub.add_parser("gen-env", help="write a seeded MDP to JSON")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--n-states", type=int)
    g.add_argument("--n-actions", type=int)
    g.add_argument("--mix", type=float)
    g.set_defaults(func=cmd_gen_env)

    c = sub.add_parser("check", help="run the identity/invariant suite")
    c.add_argument("--corrupt-tolerance", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
