"""Versioned checkpoint container: one .npz file holding every named
parameter tensor, Adam moments, the config, the vocab, and run counters.
Round-trips are bit-exact (float64 arrays stored as-is)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import Vocab
from .model import ModelParams, init_params
from .train import Adam, TrainConfig, TrainResult

FORMAT_VERSION = 1


@dataclass
class CheckpointBundle:
    config: TrainConfig
    params: ModelParams
    vocab: Vocab
    optimizer_state: dict | None
    meta: dict


def save_checkpoint(path, *, config: TrainConfig, params: ModelParams,
                    vocab: Vocab, optimizer: Adam | None = None,
                    meta: dict | None = None) -> None:
    arrays = {}
    for name, t in params.named():
        arrays[f"param/{name}"] = t.data
    if optimizer is not None:
        state = optimizer.state_dict()
        for name, a in state["m"].items():
            arrays[f"adam_m/{name}"] = a
        for name, a in state["v"].items():
            arrays[f"adam_v/{name}"] = a
        opt_meta = {"t": state["t"], "lr": state["lr"]}
    else:
        opt_meta = None
    header = {
        "version": FORMAT_VERSION,
        "config": asdict(config),
        "vocab": vocab.to_dict(),
        "optimizer": opt_meta,
        "meta": meta or {},
    }
    arrays["header"] = np.array(json.dumps(header))
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> CheckpointBundle:
    with np.load(path, allow_pickle=False) as npz:
        header = json.loads(str(npz["header"]))
        if header["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{header['version']}")
        config = TrainConfig.from_dict(header["config"])
        vocab = Vocab.from_dict(header["vocab"])
        params = init_params(config.h, vocab.size, vocab.n_answers,
                             np.random.default_rng(0),
                             identity_eo=config.identity_eo)
        for name, t in params.named():
            stored = npz[f"param/{name}"]
            if stored.shape != t.data.shape:
                raise ValueError(f"checkpoint param {name!r} has shape "
                                 f"{stored.shape}, expected {t.data.shape}")
            t.data[...] = stored
        opt_state = None
        if header["optimizer"] is not None:
            opt_state = {
                "t": header["optimizer"]["t"],
                "lr": header["optimizer"]["lr"],
                "m": {name: npz[f"adam_m/{name}"].copy()
                      for name, _ in params.trainable()},
                "v": {name: npz[f"adam_v/{name}"].copy()
                      for name, _ in params.trainable()},
            }
    return CheckpointBundle(config=config, params=params, vocab=vocab,
                            optimizer_state=opt_state, meta=header["meta"])


def result_meta(result: TrainResult) -> dict:
    """Run counters and schedule state needed to resume a finished epoch."""
    return {
        "step": result.metrics[-1]["step"] if result.metrics else 0,
        "epoch": result.epochs_run,
        "dev_acc": result.best_acc,
        "last_ckpt_acc": result.last_ckpt_acc,
        "prev_epoch_acc": result.prev_epoch_acc,
        "best_acc": result.best_acc,
        "best_step": result.best_step,
        "best_epoch": result.best_epoch,
        "rng_state": result.rng_state,
    }


def resume_bundle(bundle: CheckpointBundle) -> dict:
    """Adapt a loaded checkpoint into the `train(resume=...)` argument."""
    if bundle.optimizer_state is None:
        raise ValueError("checkpoint has no optimizer state; cannot resume")
    return {
        "params": {n: t.data.copy() for n, t in bundle.params.named()},
        "optimizer": bundle.optimizer_state,
        "meta": bundle.meta,
    }
