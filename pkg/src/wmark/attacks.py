"""Attack battery: fine-tuning variants, ownership piracy, transfer learning.

The attacker holds the full training set and the same epoch budget the
owner used, but not the trigger set. Fine-tuning continues at the model's
stored final learning rate in four flavors (last layer or all layers, with
or without re-initializing the output head). Piracy embeds a second trigger
set into an already-marked model. Transfer retrains for a new label space
while the original output head is saved for later verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wmark.data import DatasetBundle, GroundTruthOracle, LabeledSet
from wmark.nn import (
    Model,
    SavedHead,
    TrainConfig,
    accuracy,
    attach_head,
    replace_output_layer,
    train,
)
from wmark.seeding import rng_for
from wmark.watermark import (
    PRE_TRAINED,
    MarkingKey,
    VerificationKey,
    VerifyPolicy,
    VerifyResult,
    mark,
    verify,
)

FTLL = "FTLL"
FTAL = "FTAL"
RTLL = "RTLL"
RTAL = "RTAL"
VARIANTS = (FTLL, FTAL, RTLL, RTAL)

_DEFAULT_EPOCHS = 60
_DEFAULT_BATCH = 8
_DEFAULT_HALVING = 20
_DEFAULT_FINAL_LR = 0.001
_EMBED_BATCH = 100


@dataclass(frozen=True)
class AttackConfig:
    """How hard the attacker trains.

    epochs, learning_rate, batch_size, and lr_halving_period_epochs default
    to the victim model's recorded training budget: the attacker retrains
    exactly as hard as the owner did, at the stored final learning rate.
    """

    variant: str
    epochs: int | None = None
    seed: int = 0
    learning_rate: float | None = None
    batch_size: int | None = None
    lr_halving_period_epochs: int | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


@dataclass
class AttackReport:
    variant: str
    epochs: int
    seed: int
    test_accuracy_before: float
    test_accuracy_after: float
    trigger_accuracy_before: dict[str, float] = field(default_factory=dict)
    trigger_accuracy_after: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        vals = [self.test_accuracy_before, self.test_accuracy_after]
        vals += list(self.trigger_accuracy_before.values())
        vals += list(self.trigger_accuracy_after.values())
        if any(not (0.0 <= v <= 1.0) for v in vals):
            raise ValueError("accuracies must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "epochs": self.epochs,
            "seed": self.seed,
            "test_accuracy_before": self.test_accuracy_before,
            "test_accuracy_after": self.test_accuracy_after,
            "trigger_accuracy_before": dict(self.trigger_accuracy_before),
            "trigger_accuracy_after": dict(self.trigger_accuracy_after),
        }


def _attack_train_config(m: Model, cfg: AttackConfig) -> TrainConfig:
    meta = m.meta or {}
    lr = cfg.learning_rate if cfg.learning_rate is not None else m.final_lr
    if lr is None:
        lr = _DEFAULT_FINAL_LR
    epochs = cfg.epochs if cfg.epochs is not None else meta.get("epochs", _DEFAULT_EPOCHS)
    batch = cfg.batch_size if cfg.batch_size is not None else meta.get("batch_size", _DEFAULT_BATCH)
    halving = (
        cfg.lr_halving_period_epochs
        if cfg.lr_halving_period_epochs is not None
        else meta.get("lr_halving_period_epochs", _DEFAULT_HALVING)
    )
    return TrainConfig(
        learning_rate=lr,
        epochs=epochs,
        batch_size=batch,
        k_trigger_per_batch=0,
        lr_halving_period_epochs=halving,
        seed=cfg.seed,
    )


def fine_tune(
    m: Model,
    data: DatasetBundle,
    cfg: AttackConfig,
    trigger_sets: dict[str, LabeledSet] | None = None,
) -> tuple[Model, AttackReport]:
    """Run one fine-tuning variant; report accuracies before and after.

    FTLL updates only the output layer; FTAL updates everything; RTLL and
    RTAL first re-initialize the output layer, then train it alone or the
    whole network. No trigger examples enter the attacker's batches.
    """
    trigger_sets = trigger_sets or {}
    tcfg = _attack_train_config(m, cfg)

    before_test = accuracy(m, data.test)
    before_trig = {name: accuracy(m, ts) for name, ts in trigger_sets.items()}

    n_layers = len(m.weights)
    if cfg.variant in (RTLL, RTAL):
        start, _ = replace_output_layer(m, m.num_labels, rng_for(cfg.seed, "head_reinit"))
    else:
        start = m
    freeze_below = n_layers - 1 if cfg.variant in (FTLL, RTLL) else 0

    attacked = train(data.train, None, tcfg, start, freeze_below=freeze_below)
    attacked.meta.update({"attack_variant": cfg.variant, "attack_epochs": tcfg.epochs})

    report = AttackReport(
        variant=cfg.variant,
        epochs=tcfg.epochs,
        seed=cfg.seed,
        test_accuracy_before=before_test,
        test_accuracy_after=accuracy(attacked, data.test),
        trigger_accuracy_before=before_trig,
        trigger_accuracy_after={name: accuracy(attacked, ts) for name, ts in trigger_sets.items()},
    )
    return attacked, report


def piracy_embed(
    m: Model,
    new_mk: MarkingKey,
    data: DatasetBundle,
    cfg: TrainConfig | None = None,
) -> Model:
    """Embed a second trigger set into an already-marked model.

    Continues training the marked model with the pirate's trigger examples
    appended per batch, using the same epoch budget as the original
    embedding and a constant learning rate equal to the model's stored
    final one (the pirate fine-tunes the model as delivered; a restarted
    high learning rate would visibly wreck its accuracy on the original
    trigger set). The default batch size is large so each step's trigger
    share stays small: a pirate who torches the stolen model's behavior
    has stolen nothing. Zero epochs means no embedding at all.
    """
    if cfg is None:
        meta = m.meta or {}
        lr = m.final_lr if m.final_lr is not None else _DEFAULT_FINAL_LR
        epochs = meta.get("epochs", _DEFAULT_EPOCHS)
        cfg = TrainConfig(
            learning_rate=lr,
            epochs=epochs,
            batch_size=_EMBED_BATCH,
            k_trigger_per_batch=1,
            lr_halving_period_epochs=max(epochs, 1),
            seed=meta.get("train_seed", 0) + 1,
        )
    pirated = mark(m, new_mk, data, cfg, PRE_TRAINED)
    # Downstream evaluation should hit the pirated model with the same
    # attack budget as the victim, so the victim's recorded budget wins.
    for key in ("epochs", "batch_size", "lr_halving_period_epochs", "k_trigger_per_batch"):
        if key in (m.meta or {}):
            pirated.meta[key] = m.meta[key]
    pirated.meta["pirated"] = True
    return pirated


def transfer(
    m: Model,
    new_data: DatasetBundle,
    cfg: AttackConfig,
) -> tuple[Model, SavedHead]:
    """Adapt a model to a new dataset, saving the original output layer.

    The output layer is re-initialized for the new label count and the
    whole network trains on the new data (the RTAL regime). The detached
    head can later be reattached to the adapted body for verification.
    """
    new_classes = new_data.oracle.num_labels
    replaced, saved = replace_output_layer(m, new_classes, rng_for(cfg.seed, "head_reinit"))
    tcfg = _attack_train_config(m, cfg)
    adapted = train(new_data.train, None, tcfg, replaced, freeze_below=0)
    adapted.meta.update({"transferred": True, "attack_epochs": tcfg.epochs})
    return adapted, saved


def verify_with_head(
    body_model: Model,
    saved_head: SavedHead,
    mk: MarkingKey,
    vk: VerificationKey,
    oracle: GroundTruthOracle,
    policy: VerifyPolicy,
) -> VerifyResult:
    """Verify a transferred model through its original output layer."""
    composed = attach_head(body_model, saved_head)
    return verify(mk, vk, composed, oracle, policy)
