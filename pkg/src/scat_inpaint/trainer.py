"""Alternating optimization of (critic, segmenter) against the generator.

Each step runs one joint (D, S) update on the detached composite, then one
generator update through the live composite. The ablation modes gate which
objective terms exist: baseline drops the segmenter and both contrastive
terms, plus_scat restores the segmentation game, plus_text adds the
textural term, full adds the semantic term.

Determinism contract: given a seed and CPU kernels, the loss stream is
bit-reproducible, and a checkpoint restores mid-run training exactly
(parameters, optimizer moments, power-iteration buffers, data order, mask
RNG).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from typing import Optional

import numpy as np
import torch

from . import losses as L
from .data import ImageFolder, list_images
from .errors import (
    CheckpointError,
    ConfigurationError,
    DomainError,
    FormatError,
    TrainingDiverged,
)
from .losses import ABLATION_MODES, LossReport, LossWeights
from .masks import generate_freeform_mask, load_mask
from .networks import NetworkSettings, build_networks

CHECKPOINT_FORMAT = "scat-inpaint-checkpoint-v1"
CHECKPOINT_KEYS = (
    "format",
    "step",
    "config",
    "generator",
    "discriminator",
    "segmenter",
    "optimizer_g",
    "optimizer_ds",
    "numpy_rng",
    "torch_rng",
    "epoch_perm",
    "epoch_pos",
)

MASK_SOURCES = ("generator", "directory")


@dataclasses.dataclass(frozen=True)
class OptimizerSettings:
    g_lr: float = 1e-4
    ds_lr: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999

    def __post_init__(self):
        if self.g_lr <= 0 or self.ds_lr <= 0:
            raise ConfigurationError("learning rates must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("betas must lie in [0, 1)")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    dataset_dir: str
    out_dir: str = "runs/scat"
    mask_source: str = "generator"
    mask_dir: Optional[str] = None
    mask_invert: bool = False
    image_size: int = 256
    batch_size: int = 8
    max_steps: int = 0
    optimizer: OptimizerSettings = dataclasses.field(default_factory=OptimizerSettings)
    loss_weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    networks: NetworkSettings = dataclasses.field(default_factory=NetworkSettings)
    ablation: str = "full"
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be >= 0")
        if self.ablation not in ABLATION_MODES:
            raise ConfigurationError(
                f"ablation must be one of {ABLATION_MODES}, got {self.ablation!r}"
            )
        if self.mask_source not in MASK_SOURCES:
            raise ConfigurationError(
                f"mask_source must be one of {MASK_SOURCES}, got {self.mask_source!r}"
            )
        if self.mask_source == "directory" and not self.mask_dir:
            raise ConfigurationError("mask_source=directory requires mask_dir")
        if self.checkpoint_every < 0 or self.log_every < 1:
            raise ConfigurationError("bad checkpoint_every/log_every")
        if self.loss_weights.num_shallow_layers_n > self.networks.discriminator_taps:
            raise ConfigurationError(
                f"num_shallow_layers_n={self.loss_weights.num_shallow_layers_n} exceeds "
                f"discriminator_taps={self.networks.discriminator_taps}"
            )
        # surfaces size/architecture incompatibilities at config time
        self.networks.generator_config(self.image_size)
        self.networks.discriminator_config(self.image_size)
        if self.ablation != "baseline":
            self.networks.segmentation_config(self.image_size)


_NESTED = {
    "optimizer": OptimizerSettings,
    "loss_weights": LossWeights,
    "networks": NetworkSettings,
}
_TUPLE_FIELDS = {"dilation_rates"}


def _strict_build(cls, payload: dict, label: str):
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config section {label!r} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown config key(s) in {label!r}: {unknown}")
    kwargs = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in payload.items()
    }
    return cls(**kwargs)


def train_config_from_dict(payload: dict) -> TrainConfig:
    if not isinstance(payload, dict):
        raise ConfigurationError("train config must be a JSON object")
    payload = dict(payload)
    kwargs = {}
    for key, cls in _NESTED.items():
        if key in payload:
            kwargs[key] = _strict_build(cls, payload.pop(key), key)
    allowed = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {unknown}")
    if "dataset_dir" not in payload:
        raise ConfigurationError("config is missing required key 'dataset_dir'")
    kwargs.update(payload)
    return TrainConfig(**kwargs)


def load_train_config(path: str) -> TrainConfig:
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config file {path} is not valid JSON: {exc}") from exc
    return train_config_from_dict(payload)


def config_to_dict(config: TrainConfig) -> dict:
    # json round trip normalizes tuples to lists
    return json.loads(json.dumps(dataclasses.asdict(config)))


_STRUCTURAL_FIELDS = (
    "image_size",
    "batch_size",
    "ablation",
    "seed",
    "mask_source",
    "optimizer",
    "loss_weights",
    "networks",
)


def _structural_mismatches(a: TrainConfig, b: TrainConfig) -> list[str]:
    da, db = config_to_dict(a), config_to_dict(b)
    return [f for f in _STRUCTURAL_FIELDS if da[f] != db[f]]


def effective_weights(ablation: str, w: LossWeights) -> tuple[bool, LossWeights]:
    """Maps ablation mode to (segmentation game on, zeroed lambda set)."""
    if ablation == "baseline":
        return False, dataclasses.replace(w, lambda_text=0.0, lambda_sem=0.0)
    if ablation == "plus_scat":
        return True, dataclasses.replace(w, lambda_text=0.0, lambda_sem=0.0)
    if ablation == "plus_text":
        return True, dataclasses.replace(w, lambda_sem=0.0)
    if ablation == "full":
        return True, w
    raise ConfigurationError(f"unknown ablation {ablation!r}")


@dataclasses.dataclass
class TrainState:
    step: int
    config: TrainConfig
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    segmenter: Optional[torch.nn.Module]
    opt_g: torch.optim.Optimizer
    opt_ds: torch.optim.Optimizer
    rng: np.random.Generator
    epoch_perm: np.ndarray
    epoch_pos: int
    mask_files: Optional[list[str]] = None


def init_state(config: TrainConfig) -> TrainState:
    torch.manual_seed(config.seed)
    gen, disc, seg = build_networks(
        config.networks,
        config.image_size,
        include_segmenter=config.ablation != "baseline",
    )
    opt = config.optimizer
    betas = (opt.beta1, opt.beta2)
    opt_g = torch.optim.Adam(gen.parameters(), lr=opt.g_lr, betas=betas)
    ds_params = list(disc.parameters()) + (
        list(seg.parameters()) if seg is not None else []
    )
    opt_ds = torch.optim.Adam(ds_params, lr=opt.ds_lr, betas=betas)
    return TrainState(
        step=0,
        config=config,
        generator=gen,
        discriminator=disc,
        segmenter=seg,
        opt_g=opt_g,
        opt_ds=opt_ds,
        rng=np.random.default_rng(config.seed),
        epoch_perm=np.empty(0, dtype=np.int64),
        epoch_pos=0,
    )


def _draw_mask(state: TrainState) -> np.ndarray:
    cfg = state.config
    if cfg.mask_source == "generator":
        seed = int(state.rng.integers(0, 2**31 - 1))
        return generate_freeform_mask(cfg.image_size, cfg.image_size, seed=seed)
    idx = int(state.rng.integers(0, len(state.mask_files)))
    m = load_mask(state.mask_files[idx], invert=cfg.mask_invert)
    if m.shape != (cfg.image_size, cfg.image_size):
        raise DomainError(
            f"mask {state.mask_files[idx]} is {m.shape}, config wants "
            f"{cfg.image_size}x{cfg.image_size}"
        )
    return m


def draw_mask_batch(state: TrainState, batch: int) -> torch.Tensor:
    masks = np.stack([_draw_mask(state) for _ in range(batch)])
    return torch.from_numpy(masks).unsqueeze(1)


def _check_finite(pairs, step: int):
    for name, value in pairs:
        if not math.isfinite(value):
            raise TrainingDiverged(name, value, step)


def _segment_probs(seg, img):
    return seg.predict(img).prob_map


def train_step(state: TrainState, batch: tuple) -> tuple[TrainState, LossReport]:
    """One (D,S) update followed by one G update on the same batch."""
    x, m = batch
    cfg = state.config
    if x.shape[1:] != (3, cfg.image_size, cfg.image_size) or m.shape != (
        x.shape[0],
        1,
        cfg.image_size,
        cfg.image_size,
    ):
        raise DomainError(
            f"batch shapes {tuple(x.shape)}/{tuple(m.shape)} do not match config"
        )
    scat_on, w = effective_weights(cfg.ablation, cfg.loss_weights)
    G, D, S = state.generator, state.discriminator, state.segmenter
    step = state.step + 1
    zero = torch.zeros(())

    x_tilde = x * m
    x_hat = G(x_tilde, m)
    x_bar = (1 - m) * x_hat + m * x_tilde
    x_bar_d = x_bar.detach()

    # --- joint critic + segmenter update ---
    state.opt_ds.zero_grad(set_to_none=True)
    adv_d = L.adv_hinge_D(D(x).last, D(x_bar_d).last)
    if scat_on:
        if w.scat_form == "bce":
            scat_s = L.scat_loss_S(
                _segment_probs(S, x_bar_d), _segment_probs(S, x), m
            )
        else:
            scat_s = L.scat_hinge_S(S(x_bar_d), S(x), m)
    else:
        scat_s = zero
    total_ds = L.total_DS(adv_d, scat_s, w)
    _check_finite(
        [("adv_D", adv_d.item()), ("scat_S", scat_s.item()), ("total_DS", total_ds.item())],
        step,
    )
    total_ds.backward()
    state.opt_ds.step()

    # --- generator update ---
    state.opt_g.zero_grad(set_to_none=True)
    pyr_fake = D(x_bar)
    adv_g = L.adv_hinge_G(pyr_fake.last)
    if scat_on:
        if w.scat_form == "bce":
            scat_g = L.scat_loss_G(_segment_probs(S, x_bar))
        else:
            scat_g = L.scat_hinge_G(S(x_bar))
    else:
        scat_g = zero

    text = zero
    sem = zero
    if w.lambda_text > 0 or w.lambda_sem > 0:
        with torch.no_grad():
            pyr_real = D(x)
            pyr_tilde = D(x_tilde)
        n = w.num_shallow_layers_n
        if w.lambda_text > 0:
            text = L.textural_contrastive(
                pyr_fake.shallow[:n], pyr_real.shallow[:n], pyr_tilde.shallow[:n]
            )
        if w.lambda_sem > 0:
            negs = [pyr_tilde.embedding]
            with torch.no_grad():
                for _ in range(w.num_negatives_m - 1):
                    m_neg = draw_mask_batch(state, x.shape[0]).to(x.dtype)
                    negs.append(D(x * m_neg).embedding)
            sem = L.semantic_contrastive(
                pyr_fake.embedding, pyr_real.embedding, torch.stack(negs), w.temperature_t
            )
    contra = L.total_contrastive(text, sem, w)
    rec = L.reconstruction(x_hat, x)
    total_g = L.total_generator(adv_g, scat_g, contra, rec, w)
    _check_finite(
        [
            ("adv_G", adv_g.item()),
            ("scat_G", scat_g.item()),
            ("contra_text", text.item()),
            ("contra_sem", sem.item()),
            ("rec", rec.item()),
            ("total_G", total_g.item()),
        ],
        step,
    )
    total_g.backward()
    state.opt_g.step()

    state.step = step
    report = LossReport(
        step=step,
        scat_S=scat_s.item(),
        scat_G=scat_g.item(),
        contra_text=text.item(),
        contra_sem=sem.item(),
        adv_D=adv_d.item(),
        adv_G=adv_g.item(),
        rec=rec.item(),
        total_G=total_g.item(),
        total_DS=total_ds.item(),
    )
    return state, report


def _next_batch(state: TrainState, dataset) -> tuple[torch.Tensor, torch.Tensor]:
    cfg = state.config
    idxs = []
    while len(idxs) < cfg.batch_size:
        if state.epoch_pos >= len(state.epoch_perm):
            state.epoch_perm = state.rng.permutation(len(dataset))
            state.epoch_pos = 0
        take = min(cfg.batch_size - len(idxs), len(state.epoch_perm) - state.epoch_pos)
        idxs.extend(
            int(i)
            for i in state.epoch_perm[state.epoch_pos : state.epoch_pos + take]
        )
        state.epoch_pos += take
    x = torch.stack([dataset[i] for i in idxs])
    m = draw_mask_batch(state, cfg.batch_size).to(x.dtype)
    return x, m


def save_checkpoint(state: TrainState, path: str):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "step": state.step,
        "config": config_to_dict(state.config),
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "segmenter": state.segmenter.state_dict() if state.segmenter else None,
        "optimizer_g": state.opt_g.state_dict(),
        "optimizer_ds": state.opt_ds.state_dict(),
        "numpy_rng": state.rng.bit_generator.state,
        "torch_rng": torch.get_rng_state(),
        "epoch_perm": state.epoch_perm,
        "epoch_pos": state.epoch_pos,
    }
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str, expected_config: Optional[TrainConfig] = None) -> TrainState:
    if not os.path.isfile(path):
        raise CheckpointError(f"checkpoint file not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError(f"checkpoint {path} is not an archive dictionary")
    missing = [k for k in CHECKPOINT_KEYS if k not in payload]
    if missing:
        raise CheckpointError(f"checkpoint {path} is missing keys: {missing}")
    if payload["format"] != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"checkpoint format {payload['format']!r} != {CHECKPOINT_FORMAT!r}"
        )
    stored_config = train_config_from_dict(payload["config"])
    config = stored_config
    if expected_config is not None:
        bad = _structural_mismatches(expected_config, stored_config)
        if bad:
            raise CheckpointError(
                f"checkpoint/config mismatch on field(s): {bad}"
            )
        config = expected_config
    if config.ablation != "baseline" and payload["segmenter"] is None:
        raise CheckpointError(
            f"checkpoint has no segmenter but ablation {config.ablation!r} needs one"
        )

    state = init_state(config)
    state.step = int(payload["step"])
    state.generator.load_state_dict(payload["generator"])
    state.discriminator.load_state_dict(payload["discriminator"])
    if state.segmenter is not None:
        state.segmenter.load_state_dict(payload["segmenter"])
    state.opt_g.load_state_dict(payload["optimizer_g"])
    state.opt_ds.load_state_dict(payload["optimizer_ds"])
    state.rng = np.random.default_rng()
    state.rng.bit_generator.state = payload["numpy_rng"]
    torch.set_rng_state(payload["torch_rng"])
    state.epoch_perm = np.asarray(payload["epoch_perm"], dtype=np.int64)
    state.epoch_pos = int(payload["epoch_pos"])
    return state


def fit(config: TrainConfig, resume_from: Optional[str] = None) -> TrainState:
    dataset = ImageFolder(config.dataset_dir, config.image_size)
    if len(dataset) < config.batch_size:
        raise ConfigurationError(
            f"dataset has {len(dataset)} images, batch_size is {config.batch_size}"
        )
    os.makedirs(config.out_dir, exist_ok=True)

    if resume_from:
        state = load_checkpoint(resume_from, expected_config=config)
    else:
        state = init_state(config)
        with open(os.path.join(config.out_dir, "config.json"), "w") as fh:
            json.dump(config_to_dict(config), fh, indent=2)
            fh.write("\n")

    if config.mask_source == "directory":
        state.mask_files = list_images(config.mask_dir)
        if not state.mask_files:
            raise ConfigurationError(f"no mask images in {config.mask_dir}")

    log_path = os.path.join(config.out_dir, "train_log.jsonl")
    ckpt_path = os.path.join(config.out_dir, "checkpoint.pt")
    with open(log_path, "a") as log:
        while state.step < config.max_steps:
            batch = _next_batch(state, dataset)
            state, report = train_step(state, batch)
            s = state.step
            if s == 1 or s % config.log_every == 0 or s == config.max_steps:
                log.write(json.dumps(report.as_dict()) + "\n")
                log.flush()
            if config.checkpoint_every and s % config.checkpoint_every == 0:
                save_checkpoint(state, ckpt_path)
    if config.max_steps > 0:
        save_checkpoint(state, ckpt_path)
    return state
