"""Command-line entry point: ``botrl {train,eval,demo,sweep}``.

Precedence is defaults < ``--config`` file < flags. Each command prints its
resolved settings first so a run can be repeated from the banner alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dqn import Hyperparams, load_checkpoint, save_checkpoint, train, write_training_log
from .env import BearingsOnlyEnv, RewardParams, euclidean_distance
from .evaluation import Comparison, EvalConfig, compare, demo_episode, run_monte_carlo
from .models import ScenarioConfig, load_config_file
from .policies import POLICY_NAMES, make_policy


class CLIError(Exception):
    pass


def _beta(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"beta must lie in [0, 1], got {value}")
    return value


def _beta_list(text: str) -> list[float]:
    return [_beta(t) for t in text.split(",") if t.strip()]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _policy_list(text: str) -> list[str]:
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    for n in names:
        if n not in POLICY_NAMES:
            raise argparse.ArgumentTypeError(f"unknown policy {n!r} (choose from {', '.join(POLICY_NAMES)})")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="botrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML/JSON file with ScenarioConfig and Hyperparams keys")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a DQN agent for one beta")
    common(p)
    p.add_argument("--beta", type=_beta, default=0.7)
    p.add_argument("--episodes", type=_positive_int)
    p.add_argument("--out", type=Path, default=Path("qnet.bin"), help="checkpoint path; the log goes next to it")

    p = sub.add_parser("eval", help="paired Monte Carlo comparison of policies")
    common(p)
    p.add_argument("--policy", type=_policy_list, default=["ptb", "ito"])
    p.add_argument("--model", type=Path)
    p.add_argument("--episodes", type=_positive_int, default=5000)
    p.add_argument("--beta-report", type=_beta)
    p.add_argument("--out", type=Path, default=Path("."), help="directory for summary.csv and episodes.csv")
    p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("demo", help="trace a single episode")
    common(p)
    p.add_argument("--policy", type=_policy_list, default=["ptb"])
    p.add_argument("--model", type=Path)
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("sweep", help="train one agent per beta and compare them")
    common(p)
    p.add_argument("--betas", type=_beta_list, default=[0.1, 0.3, 0.5, 0.7, 0.9])
    p.add_argument("--episodes", type=_positive_int)
    p.add_argument("--eval-episodes", type=_positive_int, default=5000)
    p.add_argument("--out", type=Path, default=Path("sweep"))
    p.add_argument("--workers", type=_positive_int, default=1)
    return parser


def _resolve(args) -> tuple[ScenarioConfig, Hyperparams]:
    data = load_config_file(args.config) if args.config else {}
    scenario = ScenarioConfig(**{k: v for k, v in data.items() if k in ScenarioConfig.__dataclass_fields__})
    hp_data = {k: v for k, v in data.items() if k in Hyperparams.__dataclass_fields__}
    if getattr(args, "episodes", None) is not None and args.command in ("train", "sweep"):
        hp_data["episodes"] = args.episodes
    return scenario, Hyperparams(**hp_data)


def _banner(command: str, settings: dict) -> None:
    print(f"# botrl {command}")
    print(json.dumps(settings, indent=2, sort_keys=True, default=str))


def _load_policies(names, model_path):
    if "dqn" in names and model_path is None:
        raise CLIError("the dqn policy requires --model")
    net, beta = None, None
    if model_path is not None and "dqn" in names:
        net, header = load_checkpoint(model_path)
        beta = header.get("beta")
    return {n: make_policy(n, net, beta) for n in names}


def cmd_train(args) -> int:
    scenario, hp = _resolve(args)
    _banner("train", {"beta": args.beta, "seed": args.seed, "out": str(args.out),
                      "scenario": scenario.to_dict(), "hyperparams": hp.to_dict()})
    args.out.parent.mkdir(parents=True, exist_ok=True)

    def progress(ep, row):
        if ep % 1000 == 0 or ep == hp.episodes:
            print(f"episode {ep:>7d}  eps {row['epsilon']:.3f}  loss {row['loss']:.4f}  "
                  f"reward(ma100) {row['reward_ma100']:.3f}", flush=True)

    result = train(lambda: BearingsOnlyEnv(scenario, RewardParams(args.beta)), hp, seed=args.seed,
                   progress=progress)
    save_checkpoint(args.out, result.net, hp, args.beta)
    log_path = write_training_log(result.log, args.out.with_name(args.out.stem + "_log.csv"))
    print(f"wrote {args.out}\nwrote {log_path}")
    return 0


def _write_comparison(comp: Comparison, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    s = comp.write_summary_csv(out / "summary.csv")
    e = comp.write_episodes_csv(out / "episodes.csv")
    print(comp.to_text())
    print(f"wrote {s}\nwrote {e}")


def cmd_eval(args) -> int:
    scenario, _ = _resolve(args)
    policies = _load_policies(args.policy, args.model)
    ecfg = EvalConfig(args.episodes, args.seed, tuple(args.policy), args.beta_report, args.workers)
    _banner("eval", {"policies": args.policy, "model": args.model, "episodes": args.episodes,
                     "seed": args.seed, "beta_report": args.beta_report, "workers": args.workers,
                     "out": str(args.out), "scenario": scenario.to_dict()})
    if len(policies) == 1:
        (name, policy), = policies.items()
        summary, records = run_monte_carlo(policy, ecfg, scenario)
        comp = Comparison({name: summary}, {name: records})
    else:
        comp = compare(policies, ecfg, scenario)
    _write_comparison(comp, args.out)
    return 0


def cmd_demo(args) -> int:
    scenario, _ = _resolve(args)
    policies = _load_policies(args.policy, args.model)
    _banner("demo", {"policies": args.policy, "model": args.model, "seed": args.seed,
                     "out": str(args.out), "scenario": scenario.to_dict()})
    args.out.mkdir(parents=True, exist_ok=True)
    for name, policy in policies.items():
        outcome, path = demo_episode(policy, args.seed, scenario, args.out, name=name)
        last = outcome.trace
        check = euclidean_distance(last.mean[-1, :2], last.relative[-1, :2])
        print(f"{name}: action {outcome.action}  d_E {outcome.d_E:.6f}  d_M {outcome.d_M:.6f}  "
              f"reward {outcome.reward:.6f}  divergent {outcome.divergent}  "
              f"(trace d_E {check:.6f})")
        print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    scenario, hp = _resolve(args)
    _banner("sweep", {"betas": args.betas, "seed": args.seed, "eval_episodes": args.eval_episodes,
                      "workers": args.workers, "out": str(args.out),
                      "scenario": scenario.to_dict(), "hyperparams": hp.to_dict()})
    args.out.mkdir(parents=True, exist_ok=True)
    policies, betas = {}, {}
    for beta in args.betas:
        col = f"beta={beta:g}"
        print(f"training {col} ({hp.episodes} episodes)", flush=True)
        result = train(lambda: BearingsOnlyEnv(scenario, RewardParams(beta)), hp, seed=args.seed)
        stem = f"qnet_beta{beta:g}"
        save_checkpoint(args.out / f"{stem}.bin", result.net, hp, beta)
        write_training_log(result.log, args.out / f"{stem}_log.csv")
        policies[col] = make_policy("dqn", result.net, beta)
        betas[col] = beta
    ecfg = EvalConfig(args.eval_episodes, args.seed, tuple(policies), None, args.workers)
    if len(policies) == 1:
        (name, policy), = policies.items()
        summary, records = run_monte_carlo(policy, ecfg, scenario)
        comp = Comparison({name: summary}, {name: records})
    else:
        comp = compare(policies, ecfg, scenario, betas)
    _write_comparison(comp, args.out)
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "demo": cmd_demo, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CLIError, OSError, ValueError) as exc:
        print(f"botrl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
