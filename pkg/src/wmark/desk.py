"""Desk-scale experiment defaults.

One place for every knob of the small end-to-end configuration: a 10-class
synthetic bundle in 64 dimensions, a 64-128-128-10 network, 60 epochs at
learning rate 0.1 divided by 10 every 20 epochs, a 100-element trigger set
with 2 trigger examples appended per batch, and verification slack 0.25.
"""

from __future__ import annotations

from dataclasses import dataclass

from wmark.data import DatasetBundle, generate_synthetic
from wmark.nn import TrainConfig
from wmark.watermark import VerifyPolicy


@dataclass(frozen=True)
class DeskConfig:
    num_labels: int = 10
    d: int = 64
    train_n: int = 5000
    test_n: int = 1000
    noise_sigma: float = 0.16
    hidden: tuple[int, ...] = (128, 128)
    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 8
    k_trigger_per_batch: int = 2
    lr_halving_period_epochs: int = 20
    ell: int = 100
    epsilon: float = 0.25


DESK = DeskConfig()


def desk_bundle(seed: int, cfg: DeskConfig = DESK) -> DatasetBundle:
    return generate_synthetic(
        cfg.num_labels, cfg.d, cfg.train_n, cfg.test_n, cfg.noise_sigma, seed
    )


def desk_train_config(seed: int, cfg: DeskConfig = DESK) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        k_trigger_per_batch=cfg.k_trigger_per_batch,
        lr_halving_period_epochs=cfg.lr_halving_period_epochs,
        seed=seed,
    )


def desk_policy(cfg: DeskConfig = DESK) -> VerifyPolicy:
    return VerifyPolicy(epsilon=cfg.epsilon)


def desk_layer_dims(cfg: DeskConfig = DESK) -> list[int]:
    return [cfg.d, *cfg.hidden, cfg.num_labels]
