"""Versioned JSON artifacts for keys, models, and attack reports.

Every file is a JSON envelope {format, created_at, seed, body}. Loading
checks the format string and the body's structure and fails loudly on a
mismatch; it does not second-guess the body's values, so a tampered
commitment digest travels intact into verification and is rejected there,
at the step that owns it. Byte fields are hex strings; model parameters
are base64-encoded little-endian float32. With identical inputs, the
body is byte-identical across runs; created_at is the only field that
tracks wall time, and honoring SOURCE_DATE_EPOCH pins it too.
"""

from __future__ import annotations

import base64
import binascii
import json
from pathlib import Path

import numpy as np

from .attacks import AttackReport
from .nn import Model
from .public_verify import (
    Challenge,
    PublicMarkingKey,
    PublicVerificationKey,
    SubMarkingKey,
)
from .watermark import Backdoor, MarkingKey, VerificationKey, artifact_timestamp

FORMAT_MARKING_KEY = "wmark/marking-key/v1"
FORMAT_VERIFICATION_KEY = "wmark/verification-key/v1"
FORMAT_PUBLIC_MARKING_KEY = "wmark/public-marking-key/v1"
FORMAT_PUBLIC_VERIFICATION_KEY = "wmark/public-verification-key/v1"
FORMAT_MODEL = "wmark/model/v1"
FORMAT_REPORT = "wmark/attack-report/v1"


class ArtifactError(ValueError):
    """A file is missing, unparseable, structurally wrong, or mis-versioned."""


def save_envelope(path, fmt: str, body: dict, seed=None, created_at=None) -> None:
    env = {
        "format": fmt,
        "created_at": created_at if created_at is not None else artifact_timestamp(),
        "seed": seed,
        "body": body,
    }
    text = json.dumps(env, indent=2, sort_keys=True, allow_nan=False)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text + "\n")


def load_envelope(path, expected_format: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ArtifactError(f"{p}: cannot read artifact ({exc})") from exc
    try:
        env = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{p}: not valid JSON ({exc})") from exc
    if not isinstance(env, dict) or not isinstance(env.get("format"), str):
        raise ArtifactError(f"{p}: missing artifact format field")
    if env["format"] != expected_format:
        raise ArtifactError(
            f"{p}: artifact format {env['format']!r} does not match expected {expected_format!r}"
        )
    if not isinstance(env.get("body"), dict):
        raise ArtifactError(f"{p}: missing artifact body")
    return env


def peek_format(path) -> str:
    """The format string of an artifact file, without structural checks."""
    p = Path(path)
    try:
        env = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{p}: cannot read artifact ({exc})") from exc
    fmt = env.get("format") if isinstance(env, dict) else None
    if not isinstance(fmt, str):
        raise ArtifactError(f"{p}: missing artifact format field")
    return fmt


def _hex_list(items: list[bytes]) -> list[str]:
    return [b.hex() for b in items]


def _unhex_list(path, field: str, items) -> list[bytes]:
    if not isinstance(items, list) or not all(isinstance(s, str) for s in items):
        raise ArtifactError(f"{path}: {field} must be a list of hex strings")
    try:
        return [bytes.fromhex(s) for s in items]
    except (ValueError, binascii.Error) as exc:
        raise ArtifactError(f"{path}: {field} holds invalid hex ({exc})") from exc


def _b64_f32(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f4").tobytes()).decode("ascii")


def _unb64_f32(path, field: str, s, shape) -> np.ndarray:
    try:
        raw = base64.b64decode(s, validate=True)
    except (TypeError, binascii.Error) as exc:
        raise ArtifactError(f"{path}: {field} holds invalid base64 ({exc})") from exc
    if len(raw) % 4:
        raise ArtifactError(f"{path}: {field} is not a whole number of float32 values")
    a = np.frombuffer(raw, dtype="<f4")
    if a.size != int(np.prod(shape)):
        raise ArtifactError(f"{path}: {field} has {a.size} values, expected shape {shape}")
    return a.reshape(shape).astype(np.float32, copy=True)


def _backdoor_body(bd: Backdoor) -> dict:
    return {
        "input_dim": int(bd.trigger_inputs.shape[1]) if bd.ell else 0,
        "num_labels": int(bd.num_labels),
        "trigger_inputs": [row.tobytes().hex() for row in bd.trigger_inputs],
        "trigger_labels": [int(v) for v in bd.trigger_labels],
    }


def _backdoor_from_body(path, body: dict) -> Backdoor:
    rows = _unhex_list(path, "trigger_inputs", body.get("trigger_inputs"))
    d = int(body.get("input_dim", 0))
    if any(len(r) != d for r in rows):
        raise ArtifactError(f"{path}: trigger input width disagrees with input_dim")
    inputs = np.frombuffer(b"".join(rows), dtype=np.uint8).reshape(len(rows), d).copy()
    labels = np.asarray(body.get("trigger_labels", []), dtype=np.int64)
    try:
        return Backdoor(inputs, labels, int(body["num_labels"]))
    except (KeyError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed backdoor ({exc})") from exc


def save_marking_key(path, mk: MarkingKey) -> None:
    body = _backdoor_body(mk.backdoor)
    body["rand_t"] = _hex_list(mk.rand_t)
    body["rand_L"] = _hex_list(mk.rand_L)
    save_envelope(path, FORMAT_MARKING_KEY, body, seed=mk.seed)


def load_marking_key(path) -> MarkingKey:
    env = load_envelope(path, FORMAT_MARKING_KEY)
    body = env["body"]
    bd = _backdoor_from_body(path, body)
    try:
        return MarkingKey(
            backdoor=bd,
            rand_t=_unhex_list(path, "rand_t", body.get("rand_t")),
            rand_L=_unhex_list(path, "rand_L", body.get("rand_L")),
            seed=env.get("seed"),
        )
    except ValueError as exc:
        raise ArtifactError(f"{path}: malformed marking key ({exc})") from exc


def save_verification_key(path, vk: VerificationKey) -> None:
    body = {"commits_t": _hex_list(vk.commits_t), "commits_L": _hex_list(vk.commits_L)}
    save_envelope(path, FORMAT_VERIFICATION_KEY, body, seed=vk.seed, created_at=vk.created_at)


def load_verification_key(path) -> VerificationKey:
    env = load_envelope(path, FORMAT_VERIFICATION_KEY)
    body = env["body"]
    try:
        return VerificationKey(
            commits_t=_unhex_list(path, "commits_t", body.get("commits_t")),
            commits_L=_unhex_list(path, "commits_L", body.get("commits_L")),
            created_at=env.get("created_at"),
            seed=env.get("seed"),
        )
    except ValueError as exc:
        raise ArtifactError(f"{path}: malformed verification key ({exc})") from exc


def _challenge_body(e: Challenge) -> str:
    return "".join("1" if b else "0" for b in e.bits)


def _challenge_from_body(path, s) -> Challenge:
    if not isinstance(s, str) or set(s) - {"0", "1"}:
        raise ArtifactError(f"{path}: challenge_bits must be a string of 0s and 1s")
    return Challenge(np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0"))


def save_public_marking_key(path, pmk: PublicMarkingKey) -> None:
    mk = pmk.mk
    body = _backdoor_body(mk.backdoor)
    body["rand_t"] = _hex_list(mk.rand_t)
    body["rand_L"] = _hex_list(mk.rand_L)
    save_envelope(
        path,
        FORMAT_PUBLIC_MARKING_KEY,
        {"marking_key": body, "challenge_bits": _challenge_body(pmk.challenge)},
        seed=mk.seed,
    )


def load_public_marking_key(path) -> PublicMarkingKey:
    env = load_envelope(path, FORMAT_PUBLIC_MARKING_KEY)
    body = env["body"]
    inner = body.get("marking_key")
    if not isinstance(inner, dict):
        raise ArtifactError(f"{path}: missing marking_key body")
    bd = _backdoor_from_body(path, inner)
    try:
        mk = MarkingKey(
            backdoor=bd,
            rand_t=_unhex_list(path, "rand_t", inner.get("rand_t")),
            rand_L=_unhex_list(path, "rand_L", inner.get("rand_L")),
            seed=env.get("seed"),
        )
    except ValueError as exc:
        raise ArtifactError(f"{path}: malformed marking key ({exc})") from exc
    return PublicMarkingKey(mk=mk, challenge=_challenge_from_body(path, body.get("challenge_bits")))


def save_public_verification_key(path, pvk: PublicVerificationKey) -> None:
    vk, opened = pvk.vk, pvk.opened
    body = {
        "verification_key": {
            "commits_t": _hex_list(vk.commits_t),
            "commits_L": _hex_list(vk.commits_L),
        },
        "opened": {
            "indices": [int(i) for i in opened.indices],
            "input_dim": int(opened.trigger_inputs.shape[1]) if len(opened) else 0,
            "trigger_inputs": [row.tobytes().hex() for row in opened.trigger_inputs],
            "trigger_labels": [int(v) for v in opened.trigger_labels],
            "rand_t": _hex_list(opened.rand_t),
            "rand_L": _hex_list(opened.rand_L),
        },
    }
    save_envelope(
        path, FORMAT_PUBLIC_VERIFICATION_KEY, body, seed=vk.seed, created_at=vk.created_at
    )


def load_public_verification_key(path) -> PublicVerificationKey:
    env = load_envelope(path, FORMAT_PUBLIC_VERIFICATION_KEY)
    body = env["body"]
    inner_vk, inner_op = body.get("verification_key"), body.get("opened")
    if not isinstance(inner_vk, dict) or not isinstance(inner_op, dict):
        raise ArtifactError(f"{path}: missing verification_key or opened body")
    try:
        vk = VerificationKey(
            commits_t=_unhex_list(path, "commits_t", inner_vk.get("commits_t")),
            commits_L=_unhex_list(path, "commits_L", inner_vk.get("commits_L")),
            created_at=env.get("created_at"),
            seed=env.get("seed"),
        )
    except ValueError as exc:
        raise ArtifactError(f"{path}: malformed verification key ({exc})") from exc
    rows = _unhex_list(path, "trigger_inputs", inner_op.get("trigger_inputs"))
    d = int(inner_op.get("input_dim", 0))
    if any(len(r) != d for r in rows):
        raise ArtifactError(f"{path}: opened trigger width disagrees with input_dim")
    opened = SubMarkingKey(
        indices=np.asarray(inner_op.get("indices", []), dtype=np.int64),
        trigger_inputs=np.frombuffer(b"".join(rows), dtype=np.uint8).reshape(len(rows), d).copy(),
        trigger_labels=np.asarray(inner_op.get("trigger_labels", []), dtype=np.int64),
        rand_t=_unhex_list(path, "rand_t", inner_op.get("rand_t")),
        rand_L=_unhex_list(path, "rand_L", inner_op.get("rand_L")),
    )
    return PublicVerificationKey(vk=vk, opened=opened)


def save_model(path, m: Model) -> None:
    body = {
        "arch_id": m.arch_id,
        "activation": m.activation,
        "layer_dims": [int(v) for v in m.layer_dims],
        "final_lr": m.final_lr,
        "meta": m.meta,
        "weights": [_b64_f32(W) for W in m.weights],
        "biases": [_b64_f32(b) for b in m.biases],
    }
    seed = m.meta.get("train_seed") if isinstance(m.meta, dict) else None
    save_envelope(path, FORMAT_MODEL, body, seed=seed)


def load_model(path) -> Model:
    env = load_envelope(path, FORMAT_MODEL)
    body = env["body"]
    dims = body.get("layer_dims")
    if not isinstance(dims, list) or len(dims) < 2:
        raise ArtifactError(f"{path}: layer_dims must list input, hidden..., output sizes")
    ws, bs = body.get("weights"), body.get("biases")
    n_layers = len(dims) - 1
    if not isinstance(ws, list) or not isinstance(bs, list) or len(ws) != n_layers or len(bs) != n_layers:
        raise ArtifactError(f"{path}: weights/biases do not match layer_dims")
    weights = [
        _unb64_f32(path, f"weights[{i}]", s, (int(dims[i]), int(dims[i + 1])))
        for i, s in enumerate(ws)
    ]
    biases = [_unb64_f32(path, f"biases[{i}]", s, (int(dims[i + 1]),)) for i, s in enumerate(bs)]
    try:
        return Model(
            weights=weights,
            biases=biases,
            activation=body.get("activation", "relu"),
            final_lr=body.get("final_lr"),
            arch_id=body.get("arch_id", "mlp-relu-softmax-v1"),
            meta=body.get("meta") or {},
        )
    except ValueError as exc:
        raise ArtifactError(f"{path}: malformed model ({exc})") from exc


def save_attack_report(path, rep: AttackReport, strategy=None, model_file=None) -> None:
    body = {"strategy": strategy, "model_file": model_file, "report": rep.to_dict()}
    save_envelope(path, FORMAT_REPORT, body, seed=rep.seed)


def load_attack_report(path) -> tuple[AttackReport, dict]:
    """The stored report plus its context ({strategy, model_file})."""
    env = load_envelope(path, FORMAT_REPORT)
    body = env["body"]
    fields = body.get("report")
    if not isinstance(fields, dict):
        raise ArtifactError(f"{path}: missing report body")
    try:
        rep = AttackReport(**fields)
    except (TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed attack report ({exc})") from exc
    return rep, {"strategy": body.get("strategy"), "model_file": body.get("model_file")}
