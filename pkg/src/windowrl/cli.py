"""Command-line surface.

Subcommands:

* ``train`` — run a seeded experiment from a JSON config file.
* ``eval`` — evaluate a checkpoint's deterministic policy.
* ``mass-eval`` — evaluate a checkpoint under per-body mass rescalings.
* ``plot`` — aggregate run logs into curve PNGs + CSVs.
* ``mask-info`` — print the observation width for an env/mask combination.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import harness
from .checkpoint import load_bundle
from .envs import BUILTIN_ENVS, ObsMask, ObservationAttributeSpec, make_env, masked_dim
from .errors import ConfigurationError
from .remote import default_segment_map_path, load_segment_map, remote_env_connect


def _mask_from_arg(text: str | None, fallback: ObsMask) -> ObsMask:
    if text is None:
        return fallback
    return ObsMask.parse(text)


def _attribute_spec_for(env_id: str, segment_map: str | None) -> ObservationAttributeSpec:
    if env_id in BUILTIN_ENVS:
        return BUILTIN_ENVS[env_id].spec
    if env_id in ("humanoid", "Humanoid-v4"):
        doc = load_segment_map(segment_map or default_segment_map_path())
        lengths = doc["_lengths"]
        return ObservationAttributeSpec(
            tuple((a, lengths[a]) for a in ("position", "velocity", "mass_inertia", "force"))
        )
    raise ConfigurationError(
        f"unknown env {env_id!r}; built-ins: {sorted(BUILTIN_ENVS)}, "
        "or 'humanoid' (segment-map based)"
    )


def _build_eval_env(env_id: str, mask: ObsMask, endpoint: str | None, segment_map: str | None):
    if endpoint is not None:
        seg = segment_map or str(default_segment_map_path())
        want = env_id if env_id not in ("remote", "") else None
        return remote_env_connect(endpoint, env_id=want, segment_map=seg, mask=mask)
    return make_env(env_id, mask)


def _parse_scales(spec: str, body_names) -> list[tuple[str, float]]:
    """Parse --scales: either ``pm50`` (every body at 0.5x and 1.5x) or a
    comma list of ``body:scale`` pairs."""
    spec = spec.strip()
    if spec == "pm50":
        return harness.plus_minus_50_scales(body_names)
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" not in tok:
            raise ConfigurationError(f"scale spec {tok!r} is not body:scale")
        body, value = tok.rsplit(":", 1)
        out.append((body.strip(), float(value)))
    if not out:
        raise ConfigurationError("empty --scales specification")
    return out


def cmd_train(args) -> int:
    config = harness.load_run_config(args.config)
    if args.seed is not None:
        config.seeds = (args.seed,)
    if args.steps is not None:
        config.total_steps = args.steps
    if args.out is not None:
        config.out_dir = args.out
    config.force = args.force
    summary, artifacts = harness.run_training(config)
    print(f"run complete: {artifacts['out_dir']}")
    for seed in config.seeds:
        if seed in summary.per_seed_last25:
            print(
                f"  seed {seed}: max {summary.per_seed_max[seed]:.1f}, "
                f"last-25% {summary.per_seed_last25[seed]:.1f}"
            )
        else:
            print(f"  seed {seed}: FAILED ({summary.failures.get(seed, 'unknown')})")
    print(f"summary: {harness.format_summary(summary)}")
    return 1 if summary.failures and not summary.per_seed_last25 else 0


def cmd_eval(args) -> int:
    bundle, meta = load_bundle(args.checkpoint)
    env_id = args.env or meta.get("env_id") or "pendulum"
    mask = _mask_from_arg(args.mask, meta["mask"])
    env = _build_eval_env(env_id, mask, args.endpoint, args.segment_map)
    try:
        if env.spec.total_dim != bundle.obs_dim:
            raise ConfigurationError(
                f"checkpoint expects obs width {bundle.obs_dim}, env/mask gives "
                f"{env.spec.total_dim}"
            )
        record = harness.evaluate_policy(
            env, bundle, args.episodes, seed=args.seed, global_step=0
        )
    finally:
        close = getattr(env, "close", None)
        if close:
            close()
    returns = np.array(record.returns)
    print(f"episodes: {args.episodes}")
    print(f"mean return: {record.mean_return:.3f} ± {returns.std():.3f} (population std)")
    print("episode returns: " + ", ".join(f"{r:.3f}" for r in record.returns))
    return 0


def cmd_mass_eval(args) -> int:
    bundle, meta = load_bundle(args.checkpoint)
    env_id = args.env or meta.get("env_id") or "pendulum"
    mask = _mask_from_arg(args.mask, meta["mask"])
    env = _build_eval_env(env_id, mask, args.endpoint, args.segment_map)
    try:
        scales = _parse_scales(args.scales, env.body_names)
        results = harness.evaluate_mass_robustness(
            env, bundle, scales, episodes=args.episodes, seed=args.seed
        )
    finally:
        close = getattr(env, "close", None)
        if close:
            close()

    print(f"{'body':<16}{'scale':>8}{'mean return':>16}")
    for r in results:
        print(f"{r.body:<16}{r.scale:>8.2f}{r.mean_return:>16.3f}")
    table = harness.mass_table(results)
    print("\nper-body mean over scenarios:")
    for body, value in table.items():
        print(f"  {body:<16}{value:>16.3f}")

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["body", "scale", "episodes", "mean_return", "episode_returns"])
            for r in results:
                writer.writerow(
                    [
                        r.body,
                        repr(r.scale),
                        str(len(r.returns)),
                        repr(r.mean_return),
                        ";".join(repr(x) for x in r.returns),
                    ]
                )
        by_body = out.with_name(out.stem + "_by_body" + out.suffix)
        with open(by_body, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["body", "mean_return"])
            for body, value in table.items():
                writer.writerow([body, repr(value)])
        print(f"\nwrote {out} and {by_body}")
    return 0


def cmd_plot(args) -> int:
    emitted = harness.emit_plots(args.runs, args.out)
    for run, paths in emitted.items():
        print(f"{run}: {paths['png']}, {paths['csv']}")
    return 0


def cmd_mask_info(args) -> int:
    spec = _attribute_spec_for(args.env, args.segment_map)
    mask = ObsMask.parse(args.mask) if args.mask else ObsMask()
    width = masked_dim(spec, mask)
    print(f"env: {args.env}")
    print(f"mask: {mask.label()}")
    print(f"full_dim: {spec.total_dim}")
    print(f"masked_dim: {width}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windowrl",
        description="History-window TD3 for partially observable continuous control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a seeded experiment from a JSON config")
    p.add_argument("--config", required=True, help="path to the run config JSON")
    p.add_argument("--seed", type=int, default=None, help="train only this seed")
    p.add_argument("--steps", type=int, default=None, help="override total_steps")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint's deterministic policy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env", default=None, help="env id (defaults to the checkpoint's)")
    p.add_argument("--mask", default=None, help="mask like v,m (defaults to the checkpoint's)")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="base seed for episode resets")
    p.add_argument("--endpoint", default=None, help="host:port of a remote env server")
    p.add_argument("--segment-map", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mass-eval", help="evaluate a checkpoint under mass rescalings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scales", required=True, help='"pm50" or "body:scale,body:scale,..."')
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--env", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--segment-map", default=None)
    p.add_argument("--out", default=None, help="write scenario CSV (+ _by_body CSV) here")
    p.set_defaults(func=cmd_mass_eval)

    p = sub.add_parser("plot", help="aggregate run logs into curves")
    p.add_argument("--runs", nargs="+", required=True, help="run output directories")
    p.add_argument("--out", required=True, help="directory for PNG/CSV artifacts")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("mask-info", help="print the masked observation width")
    p.add_argument("--env", required=True)
    p.add_argument("--mask", default="", help='e.g. "v", "v,m", "velocity,force"')
    p.add_argument("--segment-map", default=None)
    p.set_defaults(func=cmd_mask_info)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
