"""Command-line entry point: the full pipeline as subcommands.

Configuration precedence is defaults < config file < environment < flags.
The only environment override is INTUITION_SEED.  Every run announces its
seed on stderr; machine-readable results go to stdout.  Exit codes: 0 on
success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import data as dt
from . import diagnostics as dg
from . import filtering as fi
from . import metrics as me
from . import tracer as trc
from . import training as tr
from .model import Model, ModelConfig

DEFAULTS: Dict = {
    "epochs": 3,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "beta": 0.25,
    "lambda_purity": 0.5,
    "lambda_focus": 0.5,
    "seed": 42,
    "theta": 0.7,
    "min_gate": 0.5,
    "sample_size": 150,
    "d_model": 128,
    "num_heads": 4,
    "num_layers": 2,
    "codebook_size": 256,
    "sequence_length": 100,
    "keep_vq_in_phase2": False,
    "freeze_codebook": False,
    "stage_a_epochs": None,
    "stage_b_epochs": None,
    "workdir": "runs",
}

GEOMETRY_KEYS = ("d_model", "num_heads", "num_layers", "codebook_size",
                 "sequence_length")


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (overrides defaults)")
    p.add_argument("--workdir", help=f"artifact directory "
                                     f"(default {DEFAULTS['workdir']})")
    p.add_argument("--seed", type=int,
                   help=f"random seed (default {DEFAULTS['seed']}; "
                        f"INTUITION_SEED overrides the config file)")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="corpus JSON file")
    p.add_argument("--epochs", type=int,
                   help=f"default {DEFAULTS['epochs']}")
    p.add_argument("--batch-size", type=int, dest="batch_size",
                   help=f"default {DEFAULTS['batch_size']}")
    p.add_argument("--learning-rate", type=float, dest="learning_rate",
                   help=f"default {DEFAULTS['learning_rate']}")
    p.add_argument("--beta", type=float,
                   help=f"VQ loss weight (default {DEFAULTS['beta']})")


def _add_geometry(p: argparse.ArgumentParser) -> None:
    for key in GEOMETRY_KEYS:
        p.add_argument("--" + key.replace("_", "-"), type=int, dest=key,
                       help=f"default {DEFAULTS[key]}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intuition",
        description="Train, filter, evaluate, and trace a quantized-intuition "
                    "text classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain",
                       help="phase 0: reconstruction pretraining of the "
                            "quantization pathway")
    _add_shared(p)
    _add_training(p)
    _add_geometry(p)

    p = sub.add_parser("train-baseline",
                       help="phase 1: classification fine-tuning on a "
                            "pretrained checkpoint; records the experience "
                            "database")
    _add_shared(p)
    _add_training(p)
    _add_geometry(p)
    p.add_argument("--vq-checkpoint", dest="vq_checkpoint",
                   help="default WORKDIR/checkpoint_vq")
    p.add_argument("--stage-a-epochs", type=int, dest="stage_a_epochs",
                   help="epochs with the gate path detached")
    p.add_argument("--stage-b-epochs", type=int, dest="stage_b_epochs",
                   help="epochs with gates live")

    p = sub.add_parser("train-expert",
                       help="phase 2: refinement on original + filtered data "
                            "with purity and focus objectives")
    _add_shared(p)
    _add_training(p)
    _add_geometry(p)
    p.add_argument("--baseline-checkpoint", dest="baseline_checkpoint",
                   help="default WORKDIR/checkpoint_baseline")
    p.add_argument("--filtered", help="default WORKDIR/filtered_data_purist.json")
    p.add_argument("--lambda-purity", type=float, dest="lambda_purity",
                   help=f"default {DEFAULTS['lambda_purity']}")
    p.add_argument("--lambda-focus", type=float, dest="lambda_focus",
                   help=f"default {DEFAULTS['lambda_focus']}")
    p.add_argument("--keep-vq-in-phase2", dest="keep_vq_in_phase2",
                   action=argparse.BooleanOptionalAction,
                   help="retain the VQ loss term in the phase-2 total")

    p = sub.add_parser("filter",
                       help="distill the stable-intuition subset from an "
                            "experience database")
    _add_shared(p)
    p.add_argument("--db", help="default WORKDIR/experience_db_finetuned.json")
    p.add_argument("--min-gate", type=float, dest="min_gate",
                   help=f"activation threshold (default {DEFAULTS['min_gate']})")

    p = sub.add_parser("evaluate",
                       help="accuracy, gated ratio, and intuitive accuracy "
                            "over a dataset split")
    _add_shared(p)
    p.add_argument("--data", required=True, help="corpus JSON file")
    p.add_argument("--checkpoint",
                   help="default WORKDIR/checkpoint_expert when present, "
                        "else WORKDIR/checkpoint_baseline")
    p.add_argument("--theta", type=float,
                   help=f"gating threshold (default {DEFAULTS['theta']})")
    p.add_argument("--sample-size", type=int, dest="sample_size",
                   help=f"validation subsample (default "
                        f"{DEFAULTS['sample_size']}; 0 = full split)")
    p.add_argument("--split", choices=("train", "validation", "all"),
                   default="validation", help="which split to score")

    p = sub.add_parser("trace",
                       help="five-step auditable inference report for one text")
    _add_shared(p)
    p.add_argument("--text", required=True)
    p.add_argument("--checkpoint",
                   help="default WORKDIR/checkpoint_expert when present, "
                        "else WORKDIR/checkpoint_baseline")
    p.add_argument("--db", help="default WORKDIR/experience_db_finetuned.json")
    p.add_argument("--theta", type=float,
                   help=f"activation threshold (default {DEFAULTS['theta']})")
    p.add_argument("--json", action="store_true",
                   help="emit the report as JSON instead of text")

    p = sub.add_parser("export-dashboard",
                       help="bundle the dashboard inputs into one directory")
    _add_shared(p)
    p.add_argument("--out", help="default WORKDIR/dashboard_data")

    p = sub.add_parser("grad-check",
                       help="finite-difference audit of every primitive and "
                            "the full toy model")
    _add_shared(p)
    p.add_argument("--step", type=float, default=None,
                   help="finite-difference step (default 1e-4)")
    p.add_argument("--tolerance", type=float, default=None,
                   help="max relative error allowed (default 1e-3)")
    return parser


def merge_config(args: argparse.Namespace) -> Dict:
    """defaults < config file < INTUITION_SEED < flags."""
    cfg = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    if os.environ.get("INTUITION_SEED"):
        cfg["seed"] = int(os.environ["INTUITION_SEED"])
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _announce(cfg: Dict) -> None:
    print(f"[run] seed={cfg['seed']} workdir={cfg['workdir']}",
          file=sys.stderr)


def _workpath(cfg: Dict, name: str) -> str:
    return os.path.join(cfg["workdir"], name)


def _load_corpus(path: str) -> List[dt.RawSample]:
    return dt.load_dataset(path)


def _encode_samples(samples: Sequence[dt.RawSample], vocab: dt.Vocab,
                    seq_len: int) -> Tuple[np.ndarray, List[str], List[str]]:
    ids = np.array([dt.encode(s.text, vocab, seq_len) for s in samples],
                   dtype=np.int64)
    texts = [s.text for s in samples]
    label_texts = [s.label_text for s in samples]
    return ids, texts, label_texts


def _labels_array(samples: Sequence[dt.RawSample]) -> np.ndarray:
    return np.array([s.label_id for s in samples], dtype=np.int64)


def _load_vocab_and_seq(cfg: Dict) -> Tuple[dt.Vocab, int]:
    path = _workpath(cfg, "model_config.json")
    vocab = dt.load_model_config(path)
    with open(path, "r", encoding="utf-8") as fh:
        seq_len = json.load(fh)["sequence_length"]
    return vocab, seq_len


def _check_geometry(args: argparse.Namespace, manifest: Dict) -> None:
    for key in GEOMETRY_KEYS:
        want = getattr(args, key, None)
        have = manifest["config"][key]
        if want is not None and want != have:
            raise ValueError(f"config/checkpoint dimension mismatch: "
                             f"{key} flag {want} vs checkpoint {have}")


def _check_vocab_hash(manifest: Dict, vocab: dt.Vocab) -> None:
    stored = manifest.get("vocab_hash")
    current = dt.vocab_hash(vocab)
    if stored is not None and stored != current:
        raise ValueError(f"vocab hash mismatch: checkpoint {stored}, "
                         f"model_config.json {current}")


def _default_checkpoint(cfg: Dict) -> str:
    expert = _workpath(cfg, "checkpoint_expert")
    if os.path.isdir(expert):
        return expert
    return _workpath(cfg, "checkpoint_baseline")


def _train_run_config(cfg: Dict, phase: int) -> tr.TrainRunConfig:
    return tr.TrainRunConfig(
        phase=phase, epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"], beta=cfg["beta"],
        lambda_purity=cfg["lambda_purity"], lambda_focus=cfg["lambda_focus"],
        seed=cfg["seed"], freeze_codebook=cfg["freeze_codebook"],
        keep_vq_in_phase2=cfg["keep_vq_in_phase2"],
        stage_a_epochs=cfg["stage_a_epochs"],
        stage_b_epochs=cfg["stage_b_epochs"])


def _emit(payload: Dict) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    os.makedirs(cfg["workdir"], exist_ok=True)

    samples = _load_corpus(args.data)
    vocab = dt.build_vocab(samples)
    dt.write_model_config(_workpath(cfg, "model_config.json"), vocab,
                          sequence_length=cfg["sequence_length"])
    train, _ = dt.split_dataset(samples, seed=cfg["seed"])
    ids, _, _ = _encode_samples(train, vocab, cfg["sequence_length"])

    model_cfg = ModelConfig(
        vocab_size=len(vocab.id_to_char), d_model=cfg["d_model"],
        num_heads=cfg["num_heads"], num_layers=cfg["num_layers"],
        sequence_length=cfg["sequence_length"],
        codebook_size=cfg["codebook_size"], pad_id=vocab.pad_id)
    model = Model(model_cfg, seed=cfg["seed"])

    run = _train_run_config(cfg, phase=0)
    with open(_workpath(cfg, "loss_log_phase0.jsonl"), "w") as log:
        stats = tr.run_phase0(model, ids, run, log=log)
    ckpt = _workpath(cfg, "checkpoint_vq")
    tr.save_checkpoint(ckpt, model, phase=0, seed=cfg["seed"],
                       step=stats["steps"], vocab_hash=dt.vocab_hash(vocab))
    _emit({"checkpoint": ckpt, "steps": stats["steps"],
           "rejected_steps": stats["rejected"], "train_size": len(ids),
           "final": stats["final"]})
    return 0


def cmd_train_baseline(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    vocab, seq_len = _load_vocab_and_seq(cfg)
    ckpt_in = args.vq_checkpoint or _workpath(cfg, "checkpoint_vq")
    model, manifest = tr.load_checkpoint(ckpt_in)
    _check_geometry(args, manifest)
    _check_vocab_hash(manifest, vocab)

    samples = _load_corpus(args.data)
    train, _ = dt.split_dataset(samples, seed=cfg["seed"])
    ids, texts, label_texts = _encode_samples(train, vocab, seq_len)
    labels = _labels_array(train)

    run = _train_run_config(cfg, phase=1)
    with open(_workpath(cfg, "loss_log_phase1.jsonl"), "w") as log:
        stats = tr.run_phase1(model, ids, labels, run, log=log)

    ckpt_out = _workpath(cfg, "checkpoint_baseline")
    tr.save_checkpoint(ckpt_out, model, phase=1, seed=cfg["seed"],
                       step=stats["steps"], vocab_hash=dt.vocab_hash(vocab))
    records = tr.record_pass(model, texts, ids, label_texts,
                             list(dt.LABEL_NAMES),
                             batch_size=cfg["batch_size"])
    db_path = _workpath(cfg, "experience_db_finetuned.json")
    tr.write_experience_db(db_path, records)
    _emit({"checkpoint": ckpt_out, "experience_db": db_path,
           "steps": stats["steps"], "rejected_steps": stats["rejected"],
           "records": len(records)})
    return 0


def cmd_train_expert(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    vocab, seq_len = _load_vocab_and_seq(cfg)
    ckpt_in = args.baseline_checkpoint or _workpath(cfg, "checkpoint_baseline")
    model, manifest = tr.load_checkpoint(ckpt_in)
    _check_geometry(args, manifest)
    _check_vocab_hash(manifest, vocab)

    samples = _load_corpus(args.data)
    train, _ = dt.split_dataset(samples, seed=cfg["seed"])
    ids, texts, label_texts = _encode_samples(train, vocab, seq_len)
    labels = _labels_array(train)

    filtered_path = args.filtered or _workpath(cfg, "filtered_data_purist.json")
    filtered_ids = filtered_labels = None
    if os.path.exists(filtered_path):
        filtered = _load_corpus(filtered_path)
        if filtered:
            filtered_ids, _, _ = _encode_samples(filtered, vocab, seq_len)
            filtered_labels = _labels_array(filtered)
    else:
        print(f"[warn] filtered dataset not found at {filtered_path}; "
              f"refining on the original data only", file=sys.stderr)

    run = _train_run_config(cfg, phase=2)
    with open(_workpath(cfg, "loss_log_phase2.jsonl"), "w") as log:
        stats = tr.run_phase2(model, ids, labels, filtered_ids,
                              filtered_labels, run, log=log)

    ckpt_out = _workpath(cfg, "checkpoint_expert")
    tr.save_checkpoint(ckpt_out, model, phase=2, seed=cfg["seed"],
                       step=stats["steps"], vocab_hash=dt.vocab_hash(vocab))
    records = tr.record_pass(model, texts, ids, label_texts,
                             list(dt.LABEL_NAMES),
                             batch_size=cfg["batch_size"])
    db_path = _workpath(cfg, "experience_db_generated.json")
    tr.write_experience_db(db_path, records)
    _emit({"checkpoint": ckpt_out, "experience_db": db_path,
           "steps": stats["steps"], "rejected_steps": stats["rejected"],
           "train_size": stats["train_size"], "records": len(records)})
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    db_path = args.db or _workpath(cfg, "experience_db_finetuned.json")
    records = tr.load_experience_db(db_path)
    observed = max(max(r.quantized_indices) for r in records) + 1
    purity_map = fi.build_purity_map(
        records, num_symbols=max(fi.DEFAULT_NUM_SYMBOLS, observed))
    result = fi.filter_by_internals(records, purity_map,
                                    min_gate=cfg["min_gate"])
    out_path = _workpath(cfg, "filtered_data_purist.json")
    fi.write_filtered_dataset(out_path, result.kept_records)
    report_path = _workpath(cfg, "purity_report.json")
    fi.write_purity_report(report_path, purity_map)
    _emit({"filtered_dataset": out_path, "purity_report": report_path,
           "kept": len(result.kept_ids), "total": len(records),
           "rejected": result.rejected, "min_gate": cfg["min_gate"]})
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    vocab, seq_len = _load_vocab_and_seq(cfg)
    ckpt = args.checkpoint or _default_checkpoint(cfg)
    model, manifest = tr.load_checkpoint(ckpt)
    _check_vocab_hash(manifest, vocab)

    samples = _load_corpus(args.data)
    train, validation = dt.split_dataset(samples, seed=cfg["seed"])
    chosen = {"train": train, "validation": validation, "all": samples}
    subset = chosen[args.split]
    ids, texts, label_texts = _encode_samples(subset, vocab, seq_len)

    sample_size = cfg["sample_size"] if cfg["sample_size"] else None
    result, _ = me.evaluate_model(model, texts, ids, label_texts,
                                  list(dt.LABEL_NAMES), theta=cfg["theta"],
                                  sample_size=sample_size, seed=cfg["seed"])
    me.write_eval_result(_workpath(cfg, "eval_result.json"), result)
    me.write_distribution_csvs(cfg["workdir"], result)
    _emit(result.to_json())
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    vocab, _ = _load_vocab_and_seq(cfg)
    ckpt = args.checkpoint or _default_checkpoint(cfg)
    model, manifest = tr.load_checkpoint(ckpt)

    db_path = args.db or _workpath(cfg, "experience_db_finetuned.json")
    records = tr.load_experience_db(db_path)
    observed = max(max(r.quantized_indices) for r in records) + 1
    purity_map = fi.build_purity_map(
        records, num_symbols=max(fi.DEFAULT_NUM_SYMBOLS, observed))

    report, text = trc.trace(
        args.text.lower(), model, vocab, records, purity_map,
        list(dt.LABEL_NAMES), theta=cfg["theta"],
        model_vocab_hash=manifest.get("vocab_hash"),
        db_vocab_hash=dt.vocab_hash(vocab))
    print(trc.report_to_json_text(report) if args.json else text)
    return 0


DASHBOARD_FILES = (
    "model_config.json",
    "experience_db_finetuned.json",
    "experience_db_generated.json",
    "purity_report.json",
    "eval_result.json",
    "reward_distribution.csv",
    "gate_distribution.csv",
    "symbol_label_distribution.csv",
)


def cmd_export_dashboard(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    out = args.out or _workpath(cfg, "dashboard_data")
    os.makedirs(out, exist_ok=True)
    included = []
    for name in DASHBOARD_FILES:
        src = _workpath(cfg, name)
        if os.path.exists(src):
            shutil.copyfile(src, os.path.join(out, name))
            included.append(name)
    index = {"files": included}
    with open(os.path.join(out, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit({"out": out, "files": included})
    return 0


def cmd_grad_check(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    _announce(cfg)
    sweep = dg.primitive_sweep()
    for kind in sorted(sweep):
        print(f"primitive {kind}: {sweep[kind]:.3e}", file=sys.stderr)
    h = args.step if args.step is not None else 1e-4
    tol = args.tolerance if args.tolerance is not None else 1e-3
    report = dg.run_toy_check(seed=cfg["seed"], h=h, tolerance=tol)
    payload = report.to_json()
    payload["primitive_max_error"] = max(sweep.values())
    _emit(payload)
    return 0 if report.passed and max(sweep.values()) < tol else 1


COMMANDS = {
    "pretrain": cmd_pretrain,
    "train-baseline": cmd_train_baseline,
    "train-expert": cmd_train_expert,
    "filter": cmd_filter,
    "evaluate": cmd_evaluate,
    "trace": cmd_trace,
    "export-dashboard": cmd_export_dashboard,
    "grad-check": cmd_grad_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # runtime failures carry exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
