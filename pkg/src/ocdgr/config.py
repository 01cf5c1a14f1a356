"""Experiment configuration and deterministic RNG derivation."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import StreamOrder, binarize, load_binary_text, load_idx, toy_generate
from .errors import ConfigError
from .model import BinaryBatch, Hyperparameters


def derive_rng(master_seed: int, label: str) -> np.random.Generator:
    """Derive an independent generator from the master seed and a role label.

    The label is hashed (crc32) into the SeedSequence spawn key, so streams
    for different roles ("train", "eval-1000", ...) never overlap and adding
    a new role never perturbs existing ones.
    """
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(key,)))


@dataclass
class ExperimentConfig:
    """Everything that determines one experiment run.

    Two runs from equal configs (and equal input files) produce identical
    model and metric files.
    """

    master_seed: int
    trainer: str
    train_dataset: dict
    test_dataset: Optional[dict] = None
    stream_order: str = "random"
    checkpoint_every: int = 1000
    estimator: str = "ais"
    ais: dict = field(default_factory=lambda: {"n_betas": 1000, "n_chains": 100})
    hyperparameters: dict = field(default_factory=dict)
    output_dir: str = "out"
    bit_packed_memory: bool = False

    def __post_init__(self):
        if self.stream_order not in ("sorted_by_class", "random"):
            raise ConfigError(f"unknown stream_order {self.stream_order!r}")
        if self.estimator not in ("exact", "ais"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if not isinstance(self.train_dataset, dict):
            raise ConfigError("train_dataset must be a dataset spec object")

    @classmethod
    def from_file(cls, path, overrides: Optional[dict] = None) -> "ExperimentConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = cls.__dataclass_fields__.keys()
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(str(e))

    def resolved(self, n_v: Optional[int] = None) -> dict:
        """Full config as a plain dict, embedded into every output file."""
        hyper = self.hyperparameters
        if n_v is not None:
            hyper = self.hyper(n_v).to_dict()
        return {
            "master_seed": self.master_seed,
            "trainer": self.trainer,
            "train_dataset": self.train_dataset,
            "test_dataset": self.test_dataset,
            "stream_order": self.stream_order,
            "checkpoint_every": self.checkpoint_every,
            "estimator": self.estimator,
            "ais": self.ais,
            "hyperparameters": hyper,
            "output_dir": str(self.output_dir),
            "bit_packed_memory": self.bit_packed_memory,
        }

    def hyper(self, n_v: int) -> Hyperparameters:
        hp = dict(self.hyperparameters)
        hp.setdefault("n_v", n_v)
        if "n_h" not in hp:
            raise ConfigError("hyperparameters must set n_h")
        return Hyperparameters(**hp)


def load_dataset(spec: dict, master_seed: int, role: str) -> BinaryBatch:
    """Materialize a dataset spec; RNG-dependent specs derive from the role label."""
    kind = spec.get("kind")
    if kind == "toy":
        rng = derive_rng(master_seed, f"{role}-toy-data")
        batch = toy_generate(
            n_per_class=spec.get("n_per_class", 1000),
            n_classes=spec.get("n_classes", 10),
            block=spec.get("block", 10),
            p=spec.get("p", 0.3),
            rng=rng,
        )
    elif kind == "idx":
        for key in ("images", "labels"):
            if key not in spec:
                raise ConfigError(f"idx dataset spec needs an {key!r} path")
        images, labels = load_idx(spec["images"], spec["labels"])
        mode = spec.get("binarize", "threshold")
        rng = derive_rng(master_seed, f"{role}-binarize") if mode == "stochastic" else None
        batch = binarize(images, mode, rng, labels)
    elif kind == "text":
        if "path" not in spec:
            raise ConfigError("text dataset spec needs a 'path'")
        batch = load_binary_text(spec["path"])
        if spec.get("labels_path"):
            labels = np.loadtxt(spec["labels_path"], dtype=np.int64, ndmin=1)
            batch = BinaryBatch(batch.rows, labels)
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    limit = spec.get("limit")
    if limit is not None:
        batch = batch.take(np.arange(min(int(limit), len(batch))))
    return batch


def stream_order_for(config: ExperimentConfig) -> StreamOrder:
    return StreamOrder(config.stream_order, seed=config.master_seed)
