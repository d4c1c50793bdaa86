"""Command-line front end: training, key management, verification, attacks.

Subcommands: train, keygen, pkeygen, mark, verify, verify-keys, pverify,
attack, size, report. Verification prints a JSON verdict on stdout and
exits 0 on verdict 1, exits 1 on verdict 0; operational problems (missing
or mis-versioned artifacts, invalid combinations) exit 2 with a diagnostic
on stderr. Dataset flags regenerate the synthetic benchmark from a seed,
so commands stay replayable without shipping data files; IDX image/label
files can stand in for the synthetic data where no oracle is needed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .artifacts import (
    ArtifactError,
    FORMAT_MODEL,
    FORMAT_PUBLIC_VERIFICATION_KEY,
    FORMAT_REPORT,
    FORMAT_VERIFICATION_KEY,
    load_attack_report,
    load_envelope,
    load_marking_key,
    load_model,
    load_public_marking_key,
    load_public_verification_key,
    load_verification_key,
    peek_format,
    save_attack_report,
    save_marking_key,
    save_model,
    save_public_marking_key,
    save_public_verification_key,
    save_verification_key,
)
from .attacks import VARIANTS, AttackConfig, fine_tune
from .data import DatasetBundle, IdxParseError, generate_synthetic, load_idx
from .desk import DESK
from .nn import TrainConfig, accuracy, init_model, train
from .public_verify import (
    BackendError,
    DesignatedVerifierBackend,
    pkeygen,
    pverify,
    select,
)
from .sizing import SizingParams, compute_sizes
from .watermark import (
    FROM_SCRATCH,
    PRE_TRAINED,
    VerifyPolicy,
    keygen,
    mark,
    open_key_pair,
    verify,
)

_STRATEGY_FLAGS = {"from-scratch": FROM_SCRATCH, "pre-trained": PRE_TRAINED}
_VERIFY_STEP_NAMES = {1: "labels", 2: "open", 3: "match"}
_PVERIFY_STEP_NAMES = {1: "challenge", 2: "open", 3: "match"}


class CliError(Exception):
    """Operational failure: maps to exit code 2."""


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _add_data_flags(p: argparse.ArgumentParser, idx: bool = False) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data-seed", type=int, default=0, help="synthetic dataset seed")
    g.add_argument("--num-labels", type=int, default=DESK.num_labels)
    g.add_argument("--input-dim", type=int, default=DESK.d)
    g.add_argument("--train-n", type=int, default=DESK.train_n)
    g.add_argument("--test-n", type=int, default=DESK.test_n)
    g.add_argument("--noise-sigma", type=float, default=DESK.noise_sigma)
    if idx:
        g.add_argument("--train-images", help="IDX image file replacing synthetic train inputs")
        g.add_argument("--train-labels", help="IDX label file for --train-images")
        g.add_argument("--test-images", help="IDX image file replacing synthetic test inputs")
        g.add_argument("--test-labels", help="IDX label file for --test-images")


def _add_train_flags(p: argparse.ArgumentParser, marking: bool = False) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=DESK.epochs)
    g.add_argument("--batch-size", type=int, default=DESK.batch_size)
    if marking:
        g.add_argument("--learning-rate", type=float, default=None,
                       help=f"default: {DESK.learning_rate} FromScratch, "
                            f"{DESK.learning_rate / 10} PreTrained")
    else:
        g.add_argument("--learning-rate", type=float, default=DESK.learning_rate)
    g.add_argument("--lr-halving-period", type=int, default=DESK.lr_halving_period_epochs)
    g.add_argument("--k-per-batch", type=int, default=DESK.k_trigger_per_batch,
                   help="trigger examples appended to each batch")


def _train_config(args, k: int, learning_rate: float | None = None) -> TrainConfig:
    lr = args.learning_rate if learning_rate is None else learning_rate
    return TrainConfig(
        learning_rate=lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        k_trigger_per_batch=k,
        lr_halving_period_epochs=args.lr_halving_period,
        seed=args.seed,
    )


def _bundle(args, need_oracle: bool) -> DatasetBundle:
    idx_flags = [getattr(args, n, None) for n in
                 ("train_images", "train_labels", "test_images", "test_labels")]
    if any(idx_flags):
        if not all(idx_flags):
            raise CliError("IDX ingestion needs all four of --train-images/--train-labels/"
                           "--test-images/--test-labels")
        if need_oracle:
            raise CliError("this command needs the synthetic oracle; IDX data has none")
        return DatasetBundle(
            train=load_idx(args.train_images, args.train_labels),
            test=load_idx(args.test_images, args.test_labels),
            oracle=None,
        )
    return generate_synthetic(
        args.num_labels, args.input_dim, args.train_n, args.test_n,
        args.noise_sigma, args.data_seed,
    )


def _num_labels(bundle: DatasetBundle) -> int:
    if bundle.oracle is not None:
        return bundle.oracle.num_labels
    return int(max(bundle.train.labels.max(), bundle.test.labels.max())) + 1


def _verdict_json(result, step_names) -> dict:
    return {
        "verdict": int(result),
        "step": step_names.get(result.step) if result.step is not None else None,
        "index": result.index,
        "matches": result.matches,
        "required": result.required,
        "reason": result.reason,
    }


def _check_key_ordering(key_path, key_fmt: str, model_path, allow_unordered: bool) -> None:
    """Refuse to verify when the published key postdates the model artifact.

    Timestamps are ISO-8601 UTC, so lexicographic order is chronological.
    """
    if allow_unordered:
        return
    key_at = load_envelope(key_path, key_fmt).get("created_at") or ""
    model_at = load_envelope(model_path, FORMAT_MODEL).get("created_at") or ""
    if key_at > model_at:
        raise CliError(
            f"verification key created at {key_at} postdates the model artifact "
            f"({model_at}); a key published after the model proves nothing "
            f"(pass --allow-unordered to override)"
        )


def cmd_train(args) -> int:
    bundle = _bundle(args, need_oracle=False)
    hidden = [int(v) for v in args.hidden.split(",") if v.strip()]
    dims = [bundle.train.inputs.shape[1], *hidden, _num_labels(bundle)]
    cfg = _train_config(args, k=0)
    model = train(bundle.train, None, cfg, init_model(dims, args.seed))
    save_model(args.out, model)
    _print_json({"out": str(args.out), "test_accuracy": accuracy(model, bundle.test)})
    return 0


def cmd_keygen(args) -> int:
    bundle = _bundle(args, need_oracle=True)
    mk, vk = keygen(args.trigger_size, bundle.train.inputs.shape[1],
                    _num_labels(bundle), bundle.oracle, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_marking_key(out / "mk.json", mk)
    save_verification_key(out / "vk.json", vk)
    _print_json({"mk": str(out / "mk.json"), "vk": str(out / "vk.json"), "ell": mk.ell})
    return 0


def cmd_pkeygen(args) -> int:
    bundle = _bundle(args, need_oracle=True)
    mk_p, vk_p = pkeygen(args.trigger_size, bundle.train.inputs.shape[1],
                         _num_labels(bundle), bundle.oracle, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_marking_key(out / "mk.json", mk_p.mk)
    save_verification_key(out / "vk.json", vk_p.vk)
    save_public_marking_key(out / "mk_p.json", mk_p)
    save_public_verification_key(out / "vk_p.json", vk_p)
    _print_json({
        "mk": str(out / "mk.json"), "vk": str(out / "vk.json"),
        "mk_p": str(out / "mk_p.json"), "vk_p": str(out / "vk_p.json"),
        "ell": mk_p.mk.ell, "opened": int(len(vk_p.opened)),
    })
    return 0


def cmd_mark(args) -> int:
    bundle = _bundle(args, need_oracle=False)
    model = load_model(args.model)
    mk = load_marking_key(args.mk)
    strategy = _STRATEGY_FLAGS[args.strategy]
    lr = args.learning_rate
    if lr is None:
        # PreTrained continues a converged model, so it defaults to a tenth of
        # the base rate; FromScratch retrains and uses the base rate.
        lr = DESK.learning_rate / 10 if strategy == PRE_TRAINED else DESK.learning_rate
    cfg = _train_config(args, k=args.k_per_batch, learning_rate=lr)
    marked = mark(model, mk, bundle, cfg, strategy)
    save_model(args.out, marked)
    _print_json({
        "out": str(args.out),
        "strategy": strategy,
        "test_accuracy": accuracy(marked, bundle.test),
        "trigger_accuracy": accuracy(marked, mk.backdoor.to_labeled_set()),
    })
    return 0


def cmd_verify(args) -> int:
    bundle = _bundle(args, need_oracle=True)
    _check_key_ordering(args.vk, FORMAT_VERIFICATION_KEY, args.model, args.allow_unordered)
    model = load_model(args.model)
    mk = load_marking_key(args.mk)
    vk = load_verification_key(args.vk)
    result = verify(mk, vk, model, bundle.oracle, VerifyPolicy(epsilon=args.epsilon))
    _print_json(_verdict_json(result, _VERIFY_STEP_NAMES))
    return 0 if result else 1


def cmd_verify_keys(args) -> int:
    mk = load_marking_key(args.mk)
    vk = load_verification_key(args.vk)
    result = open_key_pair(mk, vk)
    out = _verdict_json(result, _VERIFY_STEP_NAMES)
    out["opened"] = mk.ell if result else None
    _print_json(out)
    return 0 if result else 1


def cmd_pverify(args) -> int:
    bundle = _bundle(args, need_oracle=True)
    _check_key_ordering(
        args.pvk, FORMAT_PUBLIC_VERIFICATION_KEY, args.model, args.allow_unordered
    )
    model = load_model(args.model)
    mk_p = load_public_marking_key(args.pmk)
    vk_p = load_public_verification_key(args.pvk)
    backend = DesignatedVerifierBackend(select(mk_p.mk, mk_p.challenge, 0))
    result = pverify(vk_p, model, bundle.oracle, VerifyPolicy(epsilon=args.epsilon), backend)
    _print_json(_verdict_json(result, _PVERIFY_STEP_NAMES))
    return 0 if result else 1


def cmd_attack(args) -> int:
    bundle = _bundle(args, need_oracle=False)
    model = load_model(args.model)
    trigger_sets = {}
    if args.mk:
        mk = load_marking_key(args.mk)
        trigger_sets["trigger"] = mk.backdoor.to_labeled_set()
    cfg = AttackConfig(
        variant=args.variant.upper(),
        epochs=args.epochs,
        seed=args.seed,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
    )
    attacked, report = fine_tune(model, bundle, cfg, trigger_sets)
    attacked.meta["attack_variant"] = cfg.variant
    save_model(args.out, attacked)
    report_path = args.report or Path(args.out).with_name(Path(args.out).stem + ".report.json")
    save_attack_report(
        report_path, report,
        strategy=model.meta.get("strategy"), model_file=str(args.out),
    )
    _print_json({"out": str(args.out), "report": str(report_path), **report.to_dict()})
    return 0


def cmd_size(args) -> int:
    params = SizingParams(n_sec=args.n_sec, num_labels=args.num_labels, epsilon=args.epsilon)
    res = compute_sizes(params)
    rows = [
        ("paper_formula", res.paper_formula_size, f"({res.paper_formula_flag})"),
        ("hoeffding", res.hoeffding_size, ""),
        ("exact_minimum", res.exact_minimum_size, ""),
    ]
    for name, size, note in rows:
        tail = res.cheat_probability_at_each[name]
        note_s = f" {note}" if note else ""
        print(f"{name:<14} {size:>6}  cheat_tail={tail:.3e}{note_s}")
    if args.json_out:
        body = {
            "n_sec": args.n_sec, "num_labels": args.num_labels, "epsilon": args.epsilon,
            "paper_formula": res.paper_formula_size, "paper_formula_flag": res.paper_formula_flag,
            "hoeffding": res.hoeffding_size, "exact_minimum": res.exact_minimum_size,
            "cheat_probability_at_each": res.cheat_probability_at_each,
        }
        Path(args.json_out).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return 0


_MODEL_ROW_ORDER = ("No-WM", "FromScratch", "PreTrained")
_STRATEGY_ROW_NAMES = {FROM_SCRATCH: "FromScratch", PRE_TRAINED: "PreTrained"}


def _scan_run_dir(run_dir: Path):
    models, reports = [], []
    for p in sorted(run_dir.glob("*.json")):
        try:
            fmt = peek_format(p)
        except ArtifactError:
            continue
        if fmt == FORMAT_MODEL:
            models.append(p)
        elif fmt == FORMAT_REPORT:
            reports.append(p)
    return models, reports


def _trigger_scalar(d: dict) -> float | None:
    if not d:
        return None
    key = "trigger" if "trigger" in d else sorted(d)[0]
    return d[key]


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise CliError(f"{run_dir}: not a directory")
    model_files, report_files = _scan_run_dir(run_dir)
    if not model_files and not report_files:
        raise CliError(f"{run_dir}: no model or attack-report artifacts found")

    mk_path = Path(args.mk) if args.mk else run_dir / "mk.json"
    if not mk_path.exists():
        raise CliError(f"{mk_path}: marking key needed for trigger columns (pass --mk)")
    mk = load_marking_key(mk_path)
    trigger = mk.backdoor.to_labeled_set()
    bundle = _bundle(args, need_oracle=False)

    model_rows = {}
    for p in model_files:
        m = load_model(p)
        meta = m.meta or {}
        if "attack_variant" in meta or meta.get("pirated"):
            continue
        variant = _STRATEGY_ROW_NAMES.get(meta.get("strategy"), "No-WM")
        if variant in model_rows:
            continue
        model_rows[variant] = {
            "variant": variant,
            "file": p.name,
            "test_accuracy": round(accuracy(m, bundle.test), 4),
            "trigger_accuracy": round(accuracy(m, trigger), 4),
        }

    attack_rows = []
    for p in report_files:
        rep, ctx = load_attack_report(p)
        attack_rows.append({
            "variant": rep.variant,
            "strategy": _STRATEGY_ROW_NAMES.get(ctx.get("strategy"), ctx.get("strategy")),
            "file": p.name,
            "model_file": ctx.get("model_file"),
            "test_accuracy_before": round(rep.test_accuracy_before, 4),
            "test_accuracy_after": round(rep.test_accuracy_after, 4),
            "trigger_accuracy_before": round(_trigger_scalar(rep.trigger_accuracy_before) or 0.0, 4),
            "trigger_accuracy_after": round(_trigger_scalar(rep.trigger_accuracy_after) or 0.0, 4),
        })
    variant_order = {v: i for i, v in enumerate(VARIANTS)}
    strategy_order = {"FromScratch": 0, "PreTrained": 1}
    attack_rows.sort(key=lambda r: (variant_order.get(r["variant"], 99),
                                    strategy_order.get(r["strategy"], 99), r["file"]))

    ordered_models = [model_rows[v] for v in _MODEL_ROW_ORDER if v in model_rows]
    print(f"{'model':<13} {'test':>8} {'trigger':>8}")
    for row in ordered_models:
        print(f"{row['variant']:<13} {row['test_accuracy']:>8.4f} {row['trigger_accuracy']:>8.4f}")
    if attack_rows:
        print()
        print(f"{'attack':<7} {'strategy':<13} {'test-before':>11} {'test-after':>10} "
              f"{'trig-before':>11} {'trig-after':>10}")
        for row in attack_rows:
            print(f"{row['variant']:<7} {str(row['strategy']):<13} "
                  f"{row['test_accuracy_before']:>11.4f} {row['test_accuracy_after']:>10.4f} "
                  f"{row['trigger_accuracy_before']:>11.4f} {row['trigger_accuracy_after']:>10.4f}")

    table = {"format": "wmark/result-table/v1", "models": ordered_models, "attacks": attack_rows}
    json_out = Path(args.json_out) if args.json_out else run_dir / "result_table.json"
    json_out.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wmark",
                                 description="Backdoor watermarking for neural networks: "
                                             "train, mark, verify, attack, size, report.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an unmarked model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model artifact path")
    p.add_argument("--hidden", default=",".join(str(h) for h in DESK.hidden))
    _add_train_flags(p)
    _add_data_flags(p, idx=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("keygen", help="generate a marking/verification key pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for mk.json and vk.json")
    p.add_argument("--trigger-size", type=int, default=DESK.ell)
    _add_data_flags(p)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("pkeygen", help="generate keys plus the public opened half")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for key files")
    p.add_argument("--trigger-size", type=int, default=DESK.ell,
                   help="must be a multiple of 4 (4 per bit of soundness)")
    _add_data_flags(p)
    p.set_defaults(func=cmd_pkeygen)

    p = sub.add_parser("mark", help="embed a watermark by training")
    p.add_argument("--model", required=True)
    p.add_argument("--mk", required=True)
    p.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="from-scratch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_flags(p, marking=True)
    _add_data_flags(p, idx=True)
    p.set_defaults(func=cmd_mark)

    p = sub.add_parser("verify", help="private ownership check")
    p.add_argument("--model", required=True)
    p.add_argument("--mk", required=True)
    p.add_argument("--vk", required=True)
    p.add_argument("--epsilon", type=float, default=DESK.epsilon)
    p.add_argument("--allow-unordered", action="store_true",
                   help="verify even when the key postdates the model artifact")
    _add_data_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("verify-keys", help="open every commitment in vk under mk")
    p.add_argument("--mk", required=True)
    p.add_argument("--vk", required=True)
    p.set_defaults(func=cmd_verify_keys)

    p = sub.add_parser("pverify", help="public verification against a published key")
    p.add_argument("--model", required=True)
    p.add_argument("--pmk", required=True, help="public marking key (holds the backend witness)")
    p.add_argument("--pvk", required=True)
    p.add_argument("--epsilon", type=float, default=DESK.epsilon)
    p.add_argument("--allow-unordered", action="store_true",
                   help="verify even when the key postdates the model artifact")
    _add_data_flags(p)
    p.set_defaults(func=cmd_pverify)

    p = sub.add_parser("attack", help="fine-tuning attack on a model artifact")
    p.add_argument("--model", required=True)
    p.add_argument("--variant", choices=[v.lower() for v in VARIANTS], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mk", help="marking key for trigger-accuracy columns")
    p.add_argument("--epochs", type=int, help="default: the victim's recorded budget")
    p.add_argument("--learning-rate", type=float, help="default: the victim's final rate")
    p.add_argument("--batch-size", type=int, help="default: the victim's recorded batch size")
    p.add_argument("--out", required=True, help="attacked model artifact path")
    p.add_argument("--report", help="attack report path (default: <out>.report.json)")
    _add_data_flags(p, idx=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("size", help="trigger-set sizing for a soundness target")
    p.add_argument("--n-sec", type=int, required=True, help="bits of soundness")
    p.add_argument("--num-labels", type=int, default=DESK.num_labels)
    p.add_argument("--epsilon", type=float, default=DESK.epsilon)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("report", help="result table for a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--mk", help="marking key for trigger columns (default: <run-dir>/mk.json)")
    p.add_argument("--json-out", help="table JSON path (default: <run-dir>/result_table.json)")
    _add_data_flags(p)
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ArtifactError, IdxParseError, CliError, BackendError) as exc:
        print(f"wmark: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"wmark: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
