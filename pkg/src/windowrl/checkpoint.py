"""Checkpoint serialization.

One JSON file holds everything needed to resume or evaluate a bundle: the
TD3 and encoder configuration, all six networks (online and target), the
three Adam states, and the update counter. Numeric arrays are base64-encoded
little-endian raw bytes with an explicit dtype and shape, so the file is
self-describing and portable:

    {"dtype": "float32", "shape": [64, 6], "data": "<base64>"}

Training arrays are float32; int64 is used for step counters stored inside
arrays (none currently). The format is versioned via the top-level
``format``/``version`` fields.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .agent import NetParams, Td3Bundle, Td3Config
from .encoder import (
    EncoderConfig,
    GruParams,
    ParallelEncoderParams,
    RawEncoderParams,
)
from .envs import ObsMask
from .errors import ConfigurationError
from .nn import AdamState, MlpParams, MlpSpec

FORMAT_NAME = "windowrl-checkpoint"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def encode_array(arr: np.ndarray) -> dict:
    arr = np.asarray(arr)
    name = arr.dtype.name
    if name not in _DTYPES:
        raise ConfigurationError(f"unsupported checkpoint dtype {name}")
    little = arr.astype(_DTYPES[name], copy=False)
    return {
        "dtype": name,
        "shape": list(arr.shape),
        "data": base64.b64encode(little.tobytes()).decode("ascii"),
    }


def decode_array(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    arr = np.frombuffer(raw, dtype=_DTYPES[doc["dtype"]]).astype(doc["dtype"])
    return arr.reshape(doc["shape"])


def _mlp_spec_doc(spec: MlpSpec) -> dict:
    return {
        "layer_widths": list(spec.layer_widths),
        "hidden_activation": spec.hidden_activation,
        "output_activation": spec.output_activation,
    }


def _mlp_spec_from(doc: dict) -> MlpSpec:
    return MlpSpec(
        tuple(doc["layer_widths"]), doc["hidden_activation"], doc["output_activation"]
    )


def _mlp_params_doc(params: MlpParams) -> dict:
    return {"arrays": [encode_array(a) for a in params.arrays()]}


def _mlp_params_from(doc: dict) -> MlpParams:
    return MlpParams.from_arrays([decode_array(a) for a in doc["arrays"]])


def encoder_config_doc(cfg: EncoderConfig) -> dict:
    return {
        "window_length": cfg.window_length,
        "per_step_embed_width": cfg.per_step_embed_width,
        "combiner_hidden_widths": list(cfg.combiner_hidden_widths),
        "context_width": cfg.context_width,
        "variant": cfg.variant,
    }


def encoder_config_from(doc: dict) -> EncoderConfig:
    return EncoderConfig(
        window_length=doc["window_length"],
        per_step_embed_width=doc["per_step_embed_width"],
        combiner_hidden_widths=tuple(doc["combiner_hidden_widths"]),
        context_width=doc["context_width"],
        variant=doc["variant"],
    )


def _encoder_params_doc(params) -> dict:
    if isinstance(params, ParallelEncoderParams):
        return {
            "kind": "parallel",
            "embed_spec": _mlp_spec_doc(params.embed_spec),
            "embed": _mlp_params_doc(params.embed),
            "combiner_spec": _mlp_spec_doc(params.combiner_spec),
            "combiner": _mlp_params_doc(params.combiner),
        }
    if isinstance(params, GruParams):
        return {"kind": "recurrent", "arrays": [encode_array(a) for a in params.arrays()]}
    if isinstance(params, RawEncoderParams):
        return {"kind": "none", "obs_width": params.obs_width}
    raise ConfigurationError(f"unknown encoder params {type(params)!r}")


def _encoder_params_from(doc: dict):
    kind = doc["kind"]
    if kind == "parallel":
        return ParallelEncoderParams(
            embed_spec=_mlp_spec_from(doc["embed_spec"]),
            embed=_mlp_params_from(doc["embed"]),
            combiner_spec=_mlp_spec_from(doc["combiner_spec"]),
            combiner=_mlp_params_from(doc["combiner"]),
        )
    if kind == "recurrent":
        return GruParams(*[decode_array(a) for a in doc["arrays"]])
    if kind == "none":
        return RawEncoderParams(obs_width=doc["obs_width"])
    raise ConfigurationError(f"unknown encoder kind {kind!r}")


def _net_doc(net: NetParams) -> dict:
    return {
        "encoder": _encoder_params_doc(net.encoder),
        "head_spec": _mlp_spec_doc(net.head_spec),
        "head": _mlp_params_doc(net.head),
    }


def _net_from(doc: dict) -> NetParams:
    return NetParams(
        encoder=_encoder_params_from(doc["encoder"]),
        head_spec=_mlp_spec_from(doc["head_spec"]),
        head=_mlp_params_from(doc["head"]),
    )


def _adam_doc(state: AdamState) -> dict:
    return {
        "m": [encode_array(a) for a in state.m],
        "v": [encode_array(a) for a in state.v],
        "step_count": state.step_count,
        "learning_rate": state.learning_rate,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
    }


def _adam_from(doc: dict) -> AdamState:
    return AdamState(
        m=[decode_array(a) for a in doc["m"]],
        v=[decode_array(a) for a in doc["v"]],
        step_count=doc["step_count"],
        learning_rate=doc["learning_rate"],
        beta1=doc["beta1"],
        beta2=doc["beta2"],
        epsilon=doc["epsilon"],
    )


def td3_config_doc(cfg: Td3Config) -> dict:
    return {
        "discount": cfg.discount,
        "tau": cfg.tau,
        "policy_noise": cfg.policy_noise,
        "noise_clip": cfg.noise_clip,
        "policy_delay": cfg.policy_delay,
        "exploration_noise": cfg.exploration_noise,
        "batch_size": cfg.batch_size,
        "warmup_steps": cfg.warmup_steps,
        "actor_lr": cfg.actor_lr,
        "critic_lr": cfg.critic_lr,
        "buffer_capacity": cfg.buffer_capacity,
        "head_hidden_widths": list(cfg.head_hidden_widths),
        "action_low": list(map(float, cfg.action_low)),
        "action_high": list(map(float, cfg.action_high)),
    }


def td3_config_from(doc: dict) -> Td3Config:
    doc = dict(doc)
    doc["head_hidden_widths"] = tuple(doc.get("head_hidden_widths", (256, 256)))
    return Td3Config(**doc)


def save_bundle(
    path: str | Path,
    bundle: Td3Bundle,
    env_id: str | None = None,
    mask: ObsMask | None = None,
    extra: dict | None = None,
) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "env_id": env_id,
        "mask": sorted(mask.removed) if mask is not None else [],
        "obs_dim": bundle.obs_dim,
        "act_dim": bundle.act_dim,
        "encoder_config": encoder_config_doc(bundle.encoder_config),
        "td3_config": td3_config_doc(bundle.config),
        "update_count": bundle.update_count,
        "networks": {
            "actor": _net_doc(bundle.actor),
            "critic1": _net_doc(bundle.critic1),
            "critic2": _net_doc(bundle.critic2),
            "target_actor": _net_doc(bundle.target_actor),
            "target_critic1": _net_doc(bundle.target_critic1),
            "target_critic2": _net_doc(bundle.target_critic2),
        },
        "adam": {
            "actor": _adam_doc(bundle.adam_actor),
            "critic1": _adam_doc(bundle.adam_critic1),
            "critic2": _adam_doc(bundle.adam_critic2),
        },
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_bundle(path: str | Path) -> tuple[Td3Bundle, dict]:
    """Returns the restored bundle and a metadata dict (env_id, mask, extra)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT_NAME:
        raise ConfigurationError(f"{path} is not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {doc.get('version')}")
    nets = doc["networks"]
    bundle = Td3Bundle(
        config=td3_config_from(doc["td3_config"]),
        encoder_config=encoder_config_from(doc["encoder_config"]),
        obs_dim=doc["obs_dim"],
        act_dim=doc["act_dim"],
        actor=_net_from(nets["actor"]),
        critic1=_net_from(nets["critic1"]),
        critic2=_net_from(nets["critic2"]),
        target_actor=_net_from(nets["target_actor"]),
        target_critic1=_net_from(nets["target_critic1"]),
        target_critic2=_net_from(nets["target_critic2"]),
        adam_actor=_adam_from(doc["adam"]["actor"]),
        adam_critic1=_adam_from(doc["adam"]["critic1"]),
        adam_critic2=_adam_from(doc["adam"]["critic2"]),
        update_count=doc["update_count"],
    )
    meta = {
        "env_id": doc.get("env_id"),
        "mask": ObsMask(frozenset(doc.get("mask", []))),
        "extra": doc.get("extra", {}),
    }
    return bundle, meta
