"""Backdoor-based watermarking for neural-network classifiers.

The toolkit trains small feed-forward classifiers, embeds a secret trigger
set (random out-of-domain inputs with deliberately wrong labels), commits to
that trigger set so ownership can be proven later, and verifies the mark
either privately (by opening every commitment) or publicly (cut-and-choose
over a hash-derived challenge). An attack harness measures how well the mark
survives fine-tuning, piracy, and transfer learning.
"""

from wmark.backends import active_backend
from wmark.commitments import Payload, commit, open_commitment, sample_randomness
from wmark.data import DatasetBundle, GroundTruthOracle, LabeledSet, generate_synthetic, load_idx, oracle_label
from wmark.nn import Model, TrainConfig, accuracy, classify, classify_batch, init_model, replace_output_layer, train
from wmark.sizing import SizingParams, SizingResult, compute_sizes, exact_tail, hoeffding_size, paper_formula
from wmark.watermark import (
    Backdoor,
    KeyParams,
    MarkingKey,
    VerificationKey,
    VerifyPolicy,
    VerifyResult,
    keygen,
    mark,
    mmodel,
    open_key_pair,
    sample_backdoor,
    verify,
)
from wmark.artifacts import (
    ArtifactError,
    load_marking_key,
    load_model,
    load_verification_key,
    save_marking_key,
    save_model,
    save_verification_key,
)
from wmark.public_verify import (
    Challenge,
    DesignatedVerifierBackend,
    PublicMarkingKey,
    PublicVerificationKey,
    check_opened,
    derive_challenge,
    pkeygen,
    pverify,
    select,
)
from wmark.attacks import AttackConfig, AttackReport, fine_tune, piracy_embed, transfer, verify_with_head

__version__ = "0.1.0"

__all__ = [
    "Payload", "commit", "open_commitment", "sample_randomness",
    "LabeledSet", "GroundTruthOracle", "DatasetBundle", "generate_synthetic", "oracle_label", "load_idx",
    "Model", "TrainConfig", "init_model", "train", "classify", "classify_batch", "accuracy", "replace_output_layer",
    "Backdoor", "MarkingKey", "VerificationKey", "VerifyPolicy", "VerifyResult", "KeyParams",
    "sample_backdoor", "keygen", "mark", "verify", "mmodel", "open_key_pair",
    "ArtifactError", "save_marking_key", "load_marking_key", "save_verification_key",
    "load_verification_key", "save_model", "load_model",
    "Challenge", "PublicMarkingKey", "PublicVerificationKey", "DesignatedVerifierBackend",
    "select", "derive_challenge", "pkeygen", "check_opened", "pverify",
    "AttackConfig", "AttackReport", "fine_tune", "piracy_embed", "transfer", "verify_with_head",
    "SizingParams", "SizingResult", "paper_formula", "hoeffding_size", "exact_tail", "compute_sizes",
    "active_backend",
]
