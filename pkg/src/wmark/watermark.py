"""Trigger-set watermarking: key generation, marking, verification.

A backdoor b = (T, T_L) pairs ell out-of-domain inputs with deliberately
wrong labels. The marking key holds b plus fresh commitment randomness; the
verification key holds only the commitments, so it can be published before
any dispute without revealing the trigger set. Marking trains the backdoor
into a model; verification opens every commitment and checks the model
reproduces the wrong labels on all but an epsilon fraction of T.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from wmark.commitments import (
    TAG_LABEL,
    TAG_TRIGGER_INPUT,
    Payload,
    commit,
    open_commitment,
    sample_randomness,
)
from wmark.data import DatasetBundle, GroundTruthOracle, LabeledSet
from wmark.nn import DEFAULT_HIDDEN, Model, TrainConfig, classify_batch, init_model, train
from wmark.seeding import rng_for

FROM_SCRATCH = "FromScratch"
PRE_TRAINED = "PreTrained"
STRATEGIES = (FROM_SCRATCH, PRE_TRAINED)

_SAMPLE_BATCHES_LIMIT = 1000


def artifact_timestamp() -> str:
    """Creation time for artifacts, honoring SOURCE_DATE_EPOCH for replays."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class Backdoor:
    """Trigger inputs (raw bytes, one per feature) and their wrong labels."""

    trigger_inputs: np.ndarray  # (ell, d) uint8
    trigger_labels: np.ndarray  # (ell,) int64
    num_labels: int

    def __post_init__(self) -> None:
        self.trigger_inputs = np.ascontiguousarray(self.trigger_inputs, dtype=np.uint8)
        self.trigger_labels = np.ascontiguousarray(self.trigger_labels, dtype=np.int64)
        if self.trigger_inputs.ndim != 2 or self.trigger_labels.ndim != 1:
            raise ValueError("trigger_inputs must be (ell, d), trigger_labels (ell,)")
        if len(self.trigger_inputs) != len(self.trigger_labels):
            raise ValueError("trigger inputs and labels must have equal length")
        if len(self.trigger_inputs) and (
            self.trigger_labels.min() < 0 or self.trigger_labels.max() >= self.num_labels
        ):
            raise ValueError("trigger labels out of range")
        seen = {row.tobytes() for row in self.trigger_inputs}
        if len(seen) != len(self.trigger_inputs):
            raise ValueError("trigger inputs must be pairwise distinct")

    @property
    def ell(self) -> int:
        return len(self.trigger_labels)

    def features(self) -> np.ndarray:
        """Model-space inputs: byte value / 255, float32."""
        return (self.trigger_inputs.astype(np.float32) / 255.0).astype(np.float32)

    def to_labeled_set(self) -> LabeledSet:
        return LabeledSet(self.features(), self.trigger_labels.copy())


@dataclass
class MarkingKey:
    backdoor: Backdoor
    rand_t: list[bytes]
    rand_L: list[bytes]
    seed: int | None = None

    def __post_init__(self) -> None:
        if not (len(self.rand_t) == len(self.rand_L) == self.backdoor.ell):
            raise ValueError("randomness lists must match the trigger count")

    @property
    def ell(self) -> int:
        return self.backdoor.ell


@dataclass
class VerificationKey:
    commits_t: list[bytes]
    commits_L: list[bytes]
    created_at: str = field(default_factory=artifact_timestamp)
    seed: int | None = None

    def __post_init__(self) -> None:
        if len(self.commits_t) != len(self.commits_L):
            raise ValueError("commitment lists must have equal length")

    @property
    def ell(self) -> int:
        return len(self.commits_t)


@dataclass(frozen=True)
class VerifyPolicy:
    epsilon: float = 0.25

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon < 0.5):
            raise ValueError("epsilon must lie in (0, 0.5)")


@dataclass(eq=False)
class VerifyResult:
    """Verification verdict plus a machine-readable failure reason.

    Compares equal to the bare bit (0 or 1) it stands for.
    """

    verdict: int
    step: int | None = None
    index: int | None = None
    reason: str | None = None
    matches: int | None = None
    required: int | None = None

    def __bool__(self) -> bool:
        return self.verdict == 1

    def __int__(self) -> int:
        return self.verdict

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, np.integer)) and not isinstance(other, bool):
            return self.verdict == int(other)
        if isinstance(other, VerifyResult):
            return (
                self.verdict,
                self.step,
                self.index,
                self.reason,
                self.matches,
                self.required,
            ) == (other.verdict, other.step, other.index, other.reason, other.matches, other.required)
        return NotImplemented


@dataclass(frozen=True)
class KeyParams:
    """Trigger-set size and marking strategy for end-to-end pipelines."""

    ell: int = 100
    strategy: str = FROM_SCRATCH

    def __post_init__(self) -> None:
        if self.ell < 0:
            raise ValueError("ell must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


def sample_backdoor(
    ell: int,
    d: int,
    num_labels: int,
    oracle: GroundTruthOracle,
    rng,
) -> Backdoor:
    """Sample ell distinct random byte vectors on which the oracle is undefined.

    Inputs are uniform over {0,...,255}^d, resampled while the oracle assigns
    a label or a duplicate appears. Labels are uniform over [0, num_labels).
    Raises RuntimeError if the rejection loop exceeds its budget, which only
    happens when the oracle covers almost the whole input space.
    """
    if ell < 0:
        raise ValueError("ell must be non-negative")
    if isinstance(rng, (int, np.integer)):
        rng = rng_for(int(rng), "backdoor_inputs")
    rows: list[bytes] = []
    seen: set[bytes] = set()
    batch = max(2 * ell, 16)
    for _ in range(_SAMPLE_BATCHES_LIMIT):
        if len(rows) >= ell:
            break
        cand = rng.integers(0, 256, size=(batch, d), dtype=np.uint8)
        labels = oracle.label_batch(cand.astype(np.float64) / 255.0)
        for row, lab in zip(cand, labels):
            if lab != -1:
                continue
            key = row.tobytes()
            if key in seen:
                continue
            seen.add(key)
            rows.append(key)
            if len(rows) == ell:
                break
    else:
        raise RuntimeError(
            "could not collect enough oracle-undefined inputs; "
            "the oracle covers almost all of the input space"
        )
    inputs = np.frombuffer(b"".join(rows), dtype=np.uint8).reshape(ell, d)
    labels = rng.integers(0, num_labels, size=ell).astype(np.int64)
    return Backdoor(trigger_inputs=inputs, trigger_labels=labels, num_labels=num_labels)


def _label_body(label: int) -> bytes:
    return bytes([int(label)])


def keygen(
    ell: int,
    d: int,
    num_labels: int,
    oracle: GroundTruthOracle,
    rng,
) -> tuple[MarkingKey, VerificationKey]:
    """Sample a backdoor and commit to every trigger input and label.

    rng may be a seeded generator or a 64-bit master seed; with a seed, the
    backdoor and the commitment randomness come from independent substreams.
    """
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        bd_rng = rng_for(seed, "backdoor_inputs")
        commit_rng = rng_for(seed, "commit_randomness")
    else:
        bd_rng = commit_rng = rng
    backdoor = sample_backdoor(ell, d, num_labels, oracle, bd_rng)
    rand_t = [sample_randomness(commit_rng) for _ in range(ell)]
    rand_L = [sample_randomness(commit_rng) for _ in range(ell)]
    commits_t = [
        commit(Payload(TAG_TRIGGER_INPUT, backdoor.trigger_inputs[i].tobytes()), rand_t[i])
        for i in range(ell)
    ]
    commits_L = [
        commit(Payload(TAG_LABEL, _label_body(backdoor.trigger_labels[i])), rand_L[i])
        for i in range(ell)
    ]
    mk = MarkingKey(backdoor=backdoor, rand_t=rand_t, rand_L=rand_L, seed=seed)
    vk = VerificationKey(commits_t=commits_t, commits_L=commits_L, seed=seed)
    return mk, vk


def mark(
    model: Model,
    mk: MarkingKey,
    data: DatasetBundle,
    cfg: TrainConfig,
    strategy: str,
) -> Model:
    """Embed the marking key's backdoor into a model by training.

    FromScratch initializes a fresh model of the same architecture and trains
    it with trigger examples appended to every batch; PreTrained continues
    training the given model the same way. An empty backdoor degenerates to
    plain training.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    if model.input_dim != data.train.inputs.shape[1]:
        raise ValueError("model input dimension does not match the dataset")
    trigger = mk.backdoor.to_labeled_set() if mk.ell > 0 else None
    if strategy == FROM_SCRATCH:
        init = init_model(model.layer_dims, rng_for(cfg.seed, "model_init"))
    else:
        init = model
    marked = train(data.train, trigger, cfg, init)
    marked.meta.update(
        {"strategy": strategy, "mark_epochs": cfg.epochs, "seed": cfg.seed}
    )
    return marked


def open_key_pair(mk: MarkingKey, vk: VerificationKey) -> VerifyResult:
    """Open every commitment in vk under mk; report the first failing index."""
    if mk.ell != vk.ell:
        raise ValueError("marking and verification keys have different lengths")
    bd = mk.backdoor
    for i in range(mk.ell):
        ok_t = open_commitment(
            vk.commits_t[i], Payload(TAG_TRIGGER_INPUT, bd.trigger_inputs[i].tobytes()), mk.rand_t[i]
        )
        ok_L = open_commitment(
            vk.commits_L[i], Payload(TAG_LABEL, _label_body(bd.trigger_labels[i])), mk.rand_L[i]
        )
        if not (ok_t and ok_L):
            return VerifyResult(0, step=2, index=i, reason=f"step 2 at index {i}")
    return VerifyResult(1)


def verify(
    mk: MarkingKey,
    vk: VerificationKey,
    m: Model,
    oracle: GroundTruthOracle,
    policy: VerifyPolicy,
) -> VerifyResult:
    """Three-step ownership check; 1 only if every step passes.

    Step 1: every trigger label differs from the oracle's answer (an
    undefined answer differs from everything). Step 2: every commitment in
    vk opens under mk. Step 3: the model reproduces the trigger labels on
    all but at most epsilon * ell trigger inputs. The first failing step is
    reported with its index.
    """
    if mk.ell != vk.ell:
        raise ValueError("marking and verification keys have different lengths")
    ell = mk.ell
    bd = mk.backdoor

    oracle_answers = oracle.label_batch(bd.trigger_inputs.astype(np.float64) / 255.0)
    for i in range(ell):
        if oracle_answers[i] != -1 and oracle_answers[i] == bd.trigger_labels[i]:
            return VerifyResult(
                0, step=1, index=i, reason=f"step 1 at index {i}: trigger label equals the oracle's"
            )

    opened = open_key_pair(mk, vk)
    if not opened:
        return opened

    preds = classify_batch(m, bd.features())
    matches = int(np.sum(preds == bd.trigger_labels))
    allowed_mismatches = math.floor(policy.epsilon * ell + 1e-9)
    required = ell - allowed_mismatches
    if matches < required:
        return VerifyResult(
            0,
            step=3,
            index=None,
            reason=f"step 3: matched {matches} of {ell}, needed at least {required}",
            matches=matches,
            required=required,
        )
    return VerifyResult(1, matches=matches, required=required)


def mmodel(
    data: DatasetBundle,
    cfg: TrainConfig,
    keyparams: KeyParams,
) -> tuple[Model, Model, MarkingKey, VerificationKey]:
    """Train an unmarked model, generate keys, and mark a twin.

    The unmarked model and a FromScratch-marked twin share initialization and
    shuffling streams, so the only difference between them is the trigger
    appending. PreTrained continues the converged unmarked model instead, at a
    tenth of the base learning rate: restarting the full schedule would retrain
    the model from a warm start and leave a mark as deep as FromScratch's,
    while continuing near the annealed scale embeds the trigger without
    re-digging the body, which is what distinguishes the two strategies under
    removal attacks.
    """
    d = data.train.inputs.shape[1]
    num_labels = data.oracle.num_labels
    dims = [d, *DEFAULT_HIDDEN, num_labels]
    init = init_model(dims, rng_for(cfg.seed, "model_init"))
    unmarked = train(data.train, None, cfg, init)
    unmarked.meta.update({"strategy": "unmarked", "seed": cfg.seed})
    mk, vk = keygen(keyparams.ell, d, num_labels, data.oracle, cfg.seed)
    if keyparams.strategy == PRE_TRAINED:
        base, mark_cfg = unmarked, replace(cfg, learning_rate=cfg.learning_rate / 10)
    else:
        base, mark_cfg = init, cfg
    marked = mark(base, mk, data, mark_cfg, keyparams.strategy)
    return unmarked, marked, mk, vk
