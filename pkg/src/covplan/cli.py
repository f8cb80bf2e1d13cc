"""Command-line driver: ``train``, ``eval``, ``replay`` and a debugging ``oracle`` command.

Exit codes: 0 success, 1 replay divergence, 2 configuration error,
3 I/O or corrupt-file error, 4 Q-table/config dimension mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as cio
from .config import ConfigError, ExperimentConfig
from .env import CoverageEnv, DiscreteAction
from .learner import QLearningCoverage, evaluate_greedy
from .objects import ObjectModel

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIMS = 4

ENV_OUT = "COVPLAN_OUT"


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        self.code = code
        super().__init__(msg)


def resolve_out_dir(flag, cfg: ExperimentConfig) -> Path:
    """``--out`` beats ``$COVPLAN_OUT``, which beats the config's ``run.output_dir``."""
    if flag:
        return Path(flag)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    return Path(cfg.run.output_dir)


def _load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    try:
        return ExperimentConfig.from_ini(text)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"invalid config {path}: {exc}") from exc


def _mkdir(path: Path):
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {path}: {exc}") from exc


# -- train ------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.run.seed = args.seed
    out = resolve_out_dir(args.out, cfg)
    _mkdir(out)
    env = cfg.make_env()
    est = QLearningCoverage(env=env, **cfg.learner_params())
    paths = {
        "config": out / "config.ini",
        "qtable": out / "qtable.bin",
        "qtable_csv": out / "qtable.csv",
        "curve": out / "curve.csv",
        "episodes": out / "episodes.jsonl",
    }
    t0 = time.perf_counter()
    try:
        cfg.save(paths["config"])
        params = env.get_params()
        with open(paths["episodes"], "w") as fh:
            def emit(k, ep):
                cio.write_episode_log(fh, k, ep, params)
            est.fit(episode_callback=emit)
        cio.save_qtable(paths["qtable"], est.q_table_, cfg.hash)
        cio.dump_qtable_csv(paths["qtable_csv"], est.q_table_)
        cio.write_curve_csv(paths["curve"], est.curve_)
        wall = time.perf_counter() - t0
        cio.write_manifest(out / "manifest.json", cfg.hash, __version__, wall, paths)
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from exc
    c = est.curve_
    tail = c.coverage_time[-100:]
    print(json.dumps({
        "out": str(out), "episodes": len(c), "steps": est.n_steps_,
        "final_epsilon": est.epsilon_,
        "last100_mean_coverage_time": float(np.mean(tail)) if tail else None,
        "wall_clock_s": round(wall, 3),
    }))
    return EXIT_OK


# -- eval -------------------------------------------------------------------------

def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    try:
        q, digest = cio.load_qtable(args.qtable)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot load Q-table {args.qtable}: {exc}") from exc
    env = cfg.make_env()
    # validate before anything is written
    try:
        cio.check_qtable_shape(q, env.q_shape)
    except cio.DimensionMismatchError as exc:
        raise CliError(EXIT_DIMS, str(exc)) from exc
    if digest != cfg.hash:
        print(f"warning: Q-table was trained with config {digest[:12]}, "
              f"evaluating with {cfg.hash[:12]}", file=sys.stderr)
    seed = cfg.run.eval_seed if args.seed is None else args.seed
    res = evaluate_greedy(q, env, args.episodes, epsilon=args.epsilon, seed=seed, keep_logs=True)
    logs = res.pop("logs")
    out = resolve_out_dir(args.out, cfg)
    _mkdir(out)
    try:
        cio.write_episode_logs(out / "eval_episodes.jsonl", logs, env.get_params())
        (out / "eval_summary.json").write_text(json.dumps(res, indent=2) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from exc
    print(json.dumps(res))
    return EXIT_OK


# -- replay -----------------------------------------------------------------------

def env_from_header(header: dict) -> tuple[CoverageEnv, ObjectModel]:
    params = dict(header["env"])
    for key in ("bounds", "camera_angles", "object_params"):
        if params.get(key) is not None:
            params[key] = tuple(params[key])
    env = CoverageEnv(**params)
    return env, ObjectModel.from_json(header["object"])


def replay_episode(episode: dict, write=print) -> list[str]:
    """Re-simulate one logged episode and print its step table.

    Returns a list of divergence messages (empty when the log is consistent).
    """
    head = episode["header"]
    try:
        env, obj = env_from_header(head)
    except (TypeError, ValueError, KeyError) as exc:
        raise cio.LogFormatError(episode["lineno"], f"bad episode header: {exc}") from None
    seen = set(head.get("covered0", ()))
    env.reset(pose=head["x0"], obj=obj, covered=seen)
    problems = []
    write(f"episode {head['episode']}  start ({head['x0'][0]:.2f}, {head['x0'][1]:.2f})  "
          f"points {obj.n_points}")
    write(f"{'t':>4} {'x':>7} {'y':>7} {'lR':>3} {'lth':>3} {'cam':>3} {'r':>8}  new  (covered)")
    for rec in episode["steps"]:
        try:
            a = env.actions_.encode(DiscreteAction(*rec["a"]))
        except (TypeError, ValueError, IndexError) as exc:
            raise cio.LogFormatError(rec["lineno"], f"bad action {rec['a']}: {exc}") from None
        _, r, _, step = env.step(a)
        seen.update(step.new_cover)
        if r != rec["r"]:
            problems.append(f"t={rec['t']}: logged reward {rec['r']} but replay gives {r}")
        if list(step.new_cover) != rec["new_cover"]:
            problems.append(f"t={rec['t']}: logged new cover {rec['new_cover']} "
                            f"but replay gives {list(step.new_cover)}")
        if [step.pose[0], step.pose[1]] != rec["x"]:
            problems.append(f"t={rec['t']}: logged pose {rec['x']} but replay gives {list(step.pose)}")
        new = ",".join(f"p{i}" for i in step.new_cover) or "-"
        write(f"{rec['t']:>4} {step.pose[0]:7.2f} {step.pose[1]:7.2f} {step.action.radial:>3} "
              f"{step.action.heading:>3} {step.action.camera:>3} {r:8.2f}  {new}  "
              f"({len(seen)}/{obj.n_points}){'  COLLISION' if step.collision else ''}")
    return problems


def cmd_replay(args) -> int:
    n_eps = 0
    problems = []
    try:
        for episode in cio.read_episode_logs(args.log):
            n_eps += 1
            if args.episode is not None and episode["header"]["episode"] != args.episode:
                continue
            problems += replay_episode(episode)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.log}: {exc}") from exc
    except cio.LogFormatError as exc:
        raise CliError(EXIT_IO, f"{args.log}: {exc}") from exc
    if n_eps == 0:
        raise CliError(EXIT_IO, f"{args.log}: no episodes found")
    for p in problems:
        print("DIVERGED " + p, file=sys.stderr)
    return EXIT_DIVERGED if problems else EXIT_OK


# -- oracle (debugging) -------------------------------------------------------------

def cmd_oracle(args) -> int:
    from . import oracle

    cfg = _load_config(args.config)
    env = cfg.make_env()
    env.reset()
    if args.what == "vi":
        try:
            mdp = oracle.enumerate_mdp(env)
        except oracle.OracleSizeError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from exc
        v, _, _ = oracle.value_iteration(mdp, cfg.learner.gamma)
        print(json.dumps({"states": mdp.n_states,
                          "start_values": {int(mdp.states[s]): float(v[s]) for s in mdp.starts}}))
    elif args.what == "plan":
        start = tuple(args.start) if args.start else env.pose_
        try:
            plan = oracle.exhaustive_plan(env, start, args.horizon)
        except oracle.OracleSizeError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from exc
        print(json.dumps({"start": list(start), "actions": [list(env.actions_.decode(a))
                                                           for a in plan.actions],
                          "score": plan.score, "covered": sorted(plan.covered)}))
    else:
        pose = tuple(args.start) if args.start else env.pose_
        from .geometry import rotate_fov
        fov = rotate_fov(env.fov_cfg_, pose, env.camera_rad_[args.camera])
        print(json.dumps({"pose": list(pose), "camera": args.camera,
                          "engine": sorted(env.visible(pose, args.camera)),
                          "dense": sorted(oracle.dense_covered_points(fov, env.obj_))}))
    return EXIT_OK


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covplan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="{train,eval,replay}")

    t = sub.add_parser("train", help="train a Q-table from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="roll out a trained Q-table")
    e.add_argument("--qtable", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--episodes", type=int, required=True)
    e.add_argument("--epsilon", type=float, default=0.0)
    e.add_argument("--seed", type=int, help="evaluation seed (default: run.eval_seed)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="re-simulate an episode log and print its step table")
    r.add_argument("--log", required=True)
    r.add_argument("--episode", type=int, help="only print this episode")
    r.set_defaults(func=cmd_replay)

    o = sub.add_parser("oracle")  # hidden from the usage line; debugging only
    o.add_argument("what", choices=["vi", "plan", "visibility"])
    o.add_argument("--config", required=True)
    o.add_argument("--horizon", type=int, default=3)
    o.add_argument("--start", type=float, nargs=2)
    o.add_argument("--camera", type=int, default=0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "episodes", 1) is not None and getattr(args, "episodes", 1) < 0:
        print("error: --episodes must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
