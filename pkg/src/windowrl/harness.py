"""Experiment harness: seeded runs, evaluation, metrics, logs and plots.

A run trains one bundle per seed on an environment, evaluates the
deterministic policy every ``eval_interval`` steps on an independent
environment instance, and reduces the per-seed evaluation curves to the two
headline numbers: the cross-seed mean of each seed's maximum evaluation
return, and the cross-seed mean (+- population standard deviation) of each
seed's mean return over the final 25% of training.

Each seed writes two CSVs: ``metrics.csv`` holding only deterministic
columns (byte-identical across reruns of the same config and seed) and
``log.csv`` adding wall_clock_seconds. Mass-randomization events go to
``randomizations.csv``. Spreads everywhere are population standard
deviations.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agent import (
    ReplayBuffer,
    Td3Bundle,
    Td3Config,
    Transition,
    init_bundle,
    select_action,
    update_step,
)
from .checkpoint import (
    encoder_config_doc,
    encoder_config_from,
    save_bundle,
    td3_config_doc,
    td3_config_from,
)
from .encoder import EncoderConfig, HistoryWindow
from .envs import (
    BUILTIN_ENVS,
    ObsMask,
    RandomizationSchedule,
    make_env,
    randomize_masses,
)
from .errors import ConfigurationError, ContractViolationError, EmptyWindowError
from .remote import default_segment_map_path, remote_env_connect


@dataclass
class RunConfig:
    """Everything one experiment needs; mirrored by the JSON config file."""

    env_id: str = "pendulum"
    mask: ObsMask = ObsMask()
    endpoint: str | None = None
    segment_map: str | None = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    td3: Td3Config = field(default_factory=Td3Config)
    total_steps: int = 100_000
    eval_interval: int = 5_000
    eval_episodes: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    randomization: RandomizationSchedule | None = None
    out_dir: str = "runs/out"
    force: bool = False

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ContractViolationError("eval_interval and eval_episodes must be >= 1")
        if self.total_steps < 0:
            raise ContractViolationError("total_steps must be >= 0")


@dataclass
class EvalRecord:
    global_step: int
    mean_return: float
    returns: tuple[float, ...]


@dataclass
class MetricsSummary:
    """Cross-seed reduction of evaluation curves (spreads are population std)."""

    per_seed_max: dict[int, float]
    per_seed_last25: dict[int, float]
    mean_max: float
    std_max: float
    mean_last25: float
    std_last25: float
    failures: dict[int, str] = field(default_factory=dict)


@dataclass
class MassScenario:
    body: str
    scale: float
    mean_return: float
    returns: tuple[float, ...]


def default_td3_for_env(env_id: str) -> Td3Config:
    """Base TD3 defaults; warmup scaled down to 1000 for built-in envs."""
    if env_id in BUILTIN_ENVS:
        return Td3Config(warmup_steps=1_000)
    return Td3Config(warmup_steps=10_000)


def build_env(config: RunConfig):
    """Training/eval environment per the run config (built-in or remote)."""
    if config.endpoint is not None:
        seg = config.segment_map or str(default_segment_map_path())
        env_id = config.env_id if config.env_id not in ("remote", "") else None
        return remote_env_connect(
            config.endpoint, env_id=env_id, segment_map=seg, mask=config.mask
        )
    return make_env(config.env_id, config.mask)


def evaluate_policy(
    env,
    bundle: Td3Bundle,
    episodes: int,
    h: int | None = None,
    *,
    seed: int | None = None,
    global_step: int = 0,
) -> EvalRecord:
    """Mean episodic return of the deterministic policy over full episodes.

    Each episode keeps its own rolling window, starting from the padding
    state (repeated first observation). When ``seed`` is given, episode i
    resets the environment with seed + i, so repeated calls see identical
    initial conditions.
    """
    if episodes < 1:
        raise ContractViolationError("episodes must be >= 1")
    h = bundle.window_length if h is None else h
    if h != bundle.window_length:
        raise ContractViolationError(
            f"window length {h} != bundle's {bundle.window_length}"
        )
    returns = []
    for ep in range(episodes):
        obs = env.reset(seed=None if seed is None else seed + ep)
        window = HistoryWindow.start(np.asarray(obs, dtype=np.float32), h)
        total = 0.0
        while True:
            action = select_action(bundle, window, explore=False, rng=None)
            result = env.step(action)
            total += result.reward
            if result.terminated or result.truncated:
                break
            window = window.advance(np.asarray(result.observation, dtype=np.float32))
        returns.append(total)
    return EvalRecord(
        global_step=global_step,
        mean_return=float(np.mean(returns)),
        returns=tuple(returns),
    )


def last25_mean(records: list[EvalRecord], total_steps: int) -> float:
    """Mean of mean-returns over records in the final quarter of training.

    A record at exactly 0.75 * total_steps is included.
    """
    if not records:
        raise EmptyWindowError("no evaluation records")
    cutoff = 0.75 * total_steps
    tail = [r.mean_return for r in records if r.global_step >= cutoff]
    if not tail:
        raise EmptyWindowError(f"no evaluation records at or after step {cutoff:g}")
    return float(np.mean(tail))


def summarize(
    per_seed_records: dict[int, list[EvalRecord]], total_steps: int
) -> MetricsSummary:
    """Cross-seed metrics: mean of per-seed maxima, mean and population std
    of per-seed last-25% means. Invariant to seed ordering."""
    if not per_seed_records:
        raise EmptyWindowError("summarize needs at least one seed")
    seeds = sorted(per_seed_records)
    per_seed_max = {
        s: float(max(r.mean_return for r in per_seed_records[s])) for s in seeds
    }
    per_seed_last25 = {
        s: last25_mean(per_seed_records[s], total_steps) for s in seeds
    }
    maxima = np.array([per_seed_max[s] for s in seeds])
    last25 = np.array([per_seed_last25[s] for s in seeds])
    return MetricsSummary(
        per_seed_max=per_seed_max,
        per_seed_last25=per_seed_last25,
        mean_max=float(maxima.mean()),
        std_max=float(maxima.std()),
        mean_last25=float(last25.mean()),
        std_last25=float(last25.std()),
    )


def format_summary(summary: MetricsSummary) -> str:
    """Headline line: "<mean max> / <mean last-25%> +- <population std>"."""
    return (
        f"{summary.mean_max:.1f} / {summary.mean_last25:.1f} "
        f"± {summary.std_last25:.1f}"
    )


def evaluate_mass_robustness(
    env,
    bundle: Td3Bundle,
    scales: list[tuple[str, float]],
    episodes: int = 10,
    *,
    seed: int | None = None,
) -> list[MassScenario]:
    """Evaluate the policy under per-body mass rescalings.

    One scenario per (body, scale) pair, each running exactly ``episodes``
    episodes; the body's mass is restored to its default before the next
    scenario.
    """
    results = []
    for body, scale in scales:
        if body not in env.body_names:
            raise ConfigurationError(
                f"unknown body {body!r}; valid bodies: {list(env.body_names)}"
            )
        env.set_mass(body, float(scale))
        try:
            record = evaluate_policy(env, bundle, episodes, seed=seed)
        finally:
            env.set_mass(body, 1.0)
        results.append(
            MassScenario(
                body=body,
                scale=float(scale),
                mean_return=record.mean_return,
                returns=record.returns,
            )
        )
    return results


def mass_table(results: list[MassScenario]) -> dict[str, float]:
    """One value per body: the mean over that body's scenario means."""
    by_body: dict[str, list[float]] = {}
    for r in results:
        by_body.setdefault(r.body, []).append(r.mean_return)
    return {body: float(np.mean(vals)) for body, vals in by_body.items()}


def plus_minus_50_scales(body_names) -> list[tuple[str, float]]:
    """The +-50% scenario grid: every body at 0.5x and 1.5x default mass."""
    out = []
    for body in body_names:
        out.append((body, 0.5))
        out.append((body, 1.5))
    return out


# --------------------------------------------------------------------------
# run config serialization


def run_config_to_doc(config: RunConfig) -> dict:
    return {
        "env": config.env_id,
        "mask": sorted(config.mask.removed),
        "endpoint": config.endpoint,
        "segment_map": config.segment_map,
        "encoder": encoder_config_doc(config.encoder),
        "td3": td3_config_doc_or_partial(config.td3),
        "total_steps": config.total_steps,
        "eval_interval": config.eval_interval,
        "eval_episodes": config.eval_episodes,
        "seeds": list(config.seeds),
        "randomization": None
        if config.randomization is None
        else {
            "period": config.randomization.period,
            "scale_low": config.randomization.scale_low,
            "scale_high": config.randomization.scale_high,
            "targets": None
            if config.randomization.targets is None
            else list(config.randomization.targets),
        },
        "out_dir": config.out_dir,
    }


def td3_config_doc_or_partial(cfg: Td3Config) -> dict:
    """TD3 config as JSON; action bounds omitted when not yet bound to an env."""
    if cfg.action_low is None or cfg.action_high is None:
        doc = td3_config_doc(replace(cfg, action_low=np.array([0.0]), action_high=np.array([0.0])))
        doc.pop("action_low")
        doc.pop("action_high")
        return doc
    return td3_config_doc(cfg)


def run_config_from_doc(doc: dict) -> RunConfig:
    mask_field = doc.get("mask", [])
    if isinstance(mask_field, str):
        mask = ObsMask.parse(mask_field)
    else:
        mask = ObsMask(frozenset(mask_field))
    env_id = doc.get("env", "pendulum")
    td3_doc = dict(doc.get("td3", {}))
    base = default_td3_for_env(env_id)
    base_doc = td3_config_doc_or_partial(base)
    base_doc.update(td3_doc)
    td3 = td3_config_from(base_doc) if "action_low" in base_doc else _td3_unbound(base_doc)
    enc_doc = doc.get("encoder")
    encoder = encoder_config_from(enc_doc) if enc_doc else EncoderConfig()
    rand_doc = doc.get("randomization")
    randomization = None
    if rand_doc:
        randomization = RandomizationSchedule(
            period=rand_doc.get("period", 10_000),
            scale_low=rand_doc.get("scale_low", 0.5),
            scale_high=rand_doc.get("scale_high", 1.0),
            targets=tuple(rand_doc["targets"]) if rand_doc.get("targets") else None,
        )
    return RunConfig(
        env_id=env_id,
        mask=mask,
        endpoint=doc.get("endpoint"),
        segment_map=doc.get("segment_map"),
        encoder=encoder,
        td3=td3,
        total_steps=doc.get("total_steps", 100_000),
        eval_interval=doc.get("eval_interval", 5_000),
        eval_episodes=doc.get("eval_episodes", 10),
        seeds=tuple(doc.get("seeds", (0, 1, 2, 3, 4))),
        randomization=randomization,
        out_dir=doc.get("out_dir", "runs/out"),
    )


def _td3_unbound(doc: dict) -> Td3Config:
    doc = dict(doc)
    doc.pop("action_low", None)
    doc.pop("action_high", None)
    doc["head_hidden_widths"] = tuple(doc.get("head_hidden_widths", (256, 256)))
    return Td3Config(**doc)


def load_run_config(path: str | Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return run_config_from_doc(json.load(fh))


# --------------------------------------------------------------------------
# training


def _fmt(x: float) -> str:
    """Full-precision, round-trip-exact float formatting for CSVs."""
    return repr(float(x))


class _SeedWriters:
    def __init__(self, seed_dir: Path, seed: int):
        seed_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self._metrics = open(seed_dir / "metrics.csv", "w", encoding="utf-8", newline="")
        self._log = open(seed_dir / "log.csv", "w", encoding="utf-8", newline="")
        self._rand = open(seed_dir / "randomizations.csv", "w", encoding="utf-8", newline="")
        self.metrics = csv.writer(self._metrics, lineterminator="\n")
        self.log = csv.writer(self._log, lineterminator="\n")
        self.rand = csv.writer(self._rand, lineterminator="\n")
        self.metrics.writerow(["seed", "global_step", "mean_return", "episode_returns"])
        self.log.writerow(
            ["seed", "global_step", "mean_return", "episode_returns", "wall_clock_seconds"]
        )
        self.rand.writerow(["seed", "global_step", "body", "scale"])

    def eval_row(self, record: EvalRecord, wall_clock: float) -> None:
        joined = ";".join(_fmt(r) for r in record.returns)
        base = [str(self.seed), str(record.global_step), _fmt(record.mean_return), joined]
        self.metrics.writerow(base)
        self._metrics.flush()
        self.log.writerow(base + [_fmt(wall_clock)])
        self._log.flush()

    def rand_row(self, global_step: int, body: str, scale: float) -> None:
        self.rand.writerow([str(self.seed), str(global_step), body, _fmt(scale)])
        self._rand.flush()

    def close(self) -> None:
        self._metrics.close()
        self._log.close()
        self._rand.close()


def run_seed(config: RunConfig, seed: int, seed_dir: Path) -> list[EvalRecord]:
    """Train one seed end to end; returns its evaluation records."""
    streams = np.random.SeedSequence(seed).generate_state(6)
    env = build_env(config)
    shared_eval = config.endpoint is not None  # remote servers take one client
    eval_env = env if shared_eval else build_env(config)

    td3 = config.td3.with_bounds(env.action_low, env.action_high)
    obs_dim = env.spec.total_dim
    act_dim = env.action_dim
    bundle = init_bundle(obs_dim, act_dim, config.encoder, td3, seed=int(streams[0]))
    buffer = ReplayBuffer(td3.buffer_capacity, obs_dim, act_dim)
    explore_rng = np.random.default_rng(int(streams[2]))
    update_rng = np.random.default_rng(int(streams[3]))
    rand_rng = np.random.default_rng(int(streams[4]))
    eval_seed = int(streams[5])

    h = config.encoder.window_length
    writers = _SeedWriters(seed_dir, seed)
    records: list[EvalRecord] = []
    start_time = time.perf_counter()

    def begin_episode(seed_for_reset: int | None = None):
        obs = env.reset(seed=seed_for_reset)
        obs32 = np.asarray(obs, dtype=np.float32)
        return obs32, HistoryWindow.start(obs32, h)

    try:
        obs32, window = begin_episode(int(streams[1]))
        episode_id = 0
        step_in_episode = 0
        for step in range(1, config.total_steps + 1):
            if step <= td3.warmup_steps:
                action = explore_rng.uniform(td3.action_low, td3.action_high)
            else:
                action = select_action(bundle, window, explore=True, rng=explore_rng)
            result = env.step(action)
            next32 = np.asarray(result.observation, dtype=np.float32)
            buffer.push(
                Transition(
                    observation=obs32,
                    action=action,
                    reward=result.reward,
                    next_observation=next32,
                    terminated=result.terminated,
                    truncated=result.truncated,
                    episode_id=episode_id,
                    step_index=step_in_episode,
                )
            )
            if result.terminated or result.truncated:
                obs32, window = begin_episode()
                episode_id += 1
                step_in_episode = 0
            else:
                obs32 = next32
                window = window.advance(next32)
                step_in_episode += 1

            if step > td3.warmup_steps:
                update_step(bundle, buffer, td3, update_rng)

            if config.randomization is not None:
                for body, scale in randomize_masses(
                    env, config.randomization, rand_rng, step
                ):
                    writers.rand_row(step, body, scale)

            if step % config.eval_interval == 0:
                record = evaluate_policy(
                    eval_env,
                    bundle,
                    config.eval_episodes,
                    seed=eval_seed,
                    global_step=step,
                )
                records.append(record)
                writers.eval_row(record, time.perf_counter() - start_time)
                if shared_eval:
                    obs32, window = begin_episode()
                    episode_id += 1
                    step_in_episode = 0

        save_bundle(
            seed_dir / "checkpoint.json",
            bundle,
            env_id=config.env_id,
            mask=config.mask,
            extra={"seed": seed, "global_step": config.total_steps},
        )
    finally:
        writers.close()
        if not shared_eval:
            close = getattr(eval_env, "close", None)
            if close:
                close()
        close = getattr(env, "close", None)
        if close:
            close()
    return records


def _prepare_out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    if out.exists() and any(out.iterdir()) and not config.force:
        raise ConfigurationError(
            f"output directory {out} is not empty; pass force to overwrite"
        )
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_training(config: RunConfig) -> tuple[MetricsSummary, dict]:
    """Train every seed, write logs/checkpoints, and summarize.

    A failing seed is recorded and the remaining seeds still run; the summary
    covers the seeds that completed and marks the failures.
    """
    out = _prepare_out_dir(config)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(run_config_to_doc(config), fh, indent=2)

    per_seed: dict[int, list[EvalRecord]] = {}
    failures: dict[int, str] = {}
    for seed in config.seeds:
        seed_dir = out / f"seed_{seed}"
        try:
            per_seed[seed] = run_seed(config, seed, seed_dir)
            last25_mean(per_seed[seed], config.total_steps)  # surface empty windows now
        except Exception as exc:  # noqa: BLE001 - per-seed isolation is the contract
            failures[seed] = f"{type(exc).__name__}: {exc}"
            per_seed.pop(seed, None)

    if per_seed:
        summary = summarize(per_seed, config.total_steps)
        summary.failures = failures
    else:
        summary = MetricsSummary(
            per_seed_max={},
            per_seed_last25={},
            mean_max=float("nan"),
            std_max=float("nan"),
            mean_last25=float("nan"),
            std_last25=float("nan"),
            failures=failures,
        )

    summary_doc = {
        "std_kind": "population",
        "per_seed_max": {str(k): v for k, v in summary.per_seed_max.items()},
        "per_seed_last25": {str(k): v for k, v in summary.per_seed_last25.items()},
        "mean_max": summary.mean_max,
        "std_max": summary.std_max,
        "mean_last25": summary.mean_last25,
        "std_last25": summary.std_last25,
        "formatted": format_summary(summary) if per_seed else "n/a",
        "failures": {str(k): v for k, v in failures.items()},
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary_doc, fh, indent=2)

    artifacts = {
        "out_dir": str(out),
        "summary": str(out / "summary.json"),
        "seed_dirs": {s: str(out / f"seed_{s}") for s in config.seeds},
    }
    return summary, artifacts


# --------------------------------------------------------------------------
# plotting


def read_metrics_csv(path: str | Path) -> list[EvalRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            returns = tuple(
                float(tok) for tok in row["episode_returns"].split(";") if tok
            )
            records.append(
                EvalRecord(
                    global_step=int(row["global_step"]),
                    mean_return=float(row["mean_return"]),
                    returns=returns,
                )
            )
    return records


def emit_plots(run_dirs: list[str | Path], out_dir: str | Path) -> dict:
    """Per-run return-vs-steps curves averaged over seeds with a +-std band.

    Writes one PNG and one CSV per run directory; the CSV holds exactly the
    plotted series (step, mean, std, band edges) at full precision, so
    re-reading it reproduces the plotted values bit-exactly.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emitted = {}
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        seed_files = sorted(run_dir.glob("seed_*/metrics.csv"))
        per_seed = {f: read_metrics_csv(f) for f in seed_files}
        per_seed = {f: recs for f, recs in per_seed.items() if recs}
        if not per_seed:
            raise EmptyWindowError(f"no evaluation records under {run_dir}")
        step_sets = [tuple(r.global_step for r in recs) for recs in per_seed.values()]
        if len(set(step_sets)) != 1:
            raise ConfigurationError(
                f"seeds under {run_dir} disagree on evaluation steps"
            )
        steps = np.array(step_sets[0])
        curves = np.array(
            [[r.mean_return for r in recs] for recs in per_seed.values()]
        )
        mean = curves.mean(axis=0)
        std = curves.std(axis=0)  # population std across seeds

        name = run_dir.name or "run"
        csv_path = out / f"{name}_curve.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["global_step", "mean_return", "std_return", "band_low", "band_high"])
            for i in range(steps.shape[0]):
                writer.writerow(
                    [
                        str(int(steps[i])),
                        _fmt(mean[i]),
                        _fmt(std[i]),
                        _fmt(mean[i] - std[i]),
                        _fmt(mean[i] + std[i]),
                    ]
                )

        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.plot(steps, mean, label=name)
        ax.fill_between(steps, mean - std, mean + std, alpha=0.25)
        ax.set_xlabel("environment steps")
        ax.set_ylabel("mean evaluation return")
        ax.set_title(name)
        ax.legend(loc="best")
        fig.tight_layout()
        png_path = out / f"{name}_curve.png"
        fig.savefig(png_path, dpi=120)
        plt.close(fig)

        emitted[str(run_dir)] = {
            "csv": str(csv_path),
            "png": str(png_path),
            "series": (steps, mean, std),
        }
    return emitted
