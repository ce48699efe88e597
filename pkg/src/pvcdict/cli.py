"""Command-line entry point: ``pvcdict <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 unmet constraint.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import codec, evaluate
from .bandwidth import CostModel, OperatingPoint, bandwidth_table
from .classifier import (ClassifierModel, classify_beat, label_for_ratio, roc_from_ratios,
                         sparsity_ratio, write_roc_csv)
from .exceptions import ConstraintError, DataError, DomainError, UsageError
from .ksvd import KsvdConfig, load_dictionary, save_dictionary
from .preprocess import preprocess_record, read_annotations, read_record
from .sparse_core import Label, prd
from .streamer import parse_label_script, run_stream
from .synth import synth_corpus, write_corpus

log = logging.getLogger("pvcdict")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONSTRAINT = 0, 2, 3, 4
WORKERS_ENV = "PVCDICT_WORKERS"

_PIPE_KEYS = {f.name for f in fields(evaluate.PipelineConfig)} - {"ksvd"}
_KSVD_KEYS = {f.name for f in fields(KsvdConfig)}


# --- configuration ----------------------------------------------------------

def load_config(path) -> dict:
    """Read a JSON run configuration; unknown keys are a usage error."""
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")
    known = _PIPE_KEYS | {"ksvd", "tau"}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    if set(cfg.get("ksvd", {})) - _KSVD_KEYS:
        raise UsageError(f"unknown ksvd keys: {sorted(set(cfg['ksvd']) - _KSVD_KEYS)}")
    return cfg


def pipeline_config(cfg: dict, args) -> evaluate.PipelineConfig:
    """Config file values, overridden by any flag given on the command line."""
    kw = {k: v for k, v in cfg.items() if k in _PIPE_KEYS}
    ks = dict(cfg.get("ksvd", {}))
    for k in _PIPE_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            kw[k] = v
    for k, attr in (("n_atoms", "n_atoms"), ("sparsity", "sparsity"),
                    ("iterations", "ksvd_iterations"), ("seed", "seed")):
        v = getattr(args, attr, None)
        if v is not None:
            ks[k] = v
    return evaluate.PipelineConfig(ksvd=KsvdConfig(**ks), **kw)


def _add_pipeline_flags(p):
    g = p.add_argument_group("model parameters")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--prd-class", dest="prd_class", type=float)
    g.add_argument("--prd-int", dest="prd_int", type=float)
    g.add_argument("--prd-compr", dest="prd_compr", type=float)
    g.add_argument("--target-se", dest="target_se", type=float)
    g.add_argument("--th", type=int)
    g.add_argument("--nth", dest="n_th", type=int)
    g.add_argument("--n-atoms", dest="n_atoms", type=int)
    g.add_argument("--sparsity", type=int)
    g.add_argument("--ksvd-iterations", dest="ksvd_iterations", type=int)
    g.add_argument("--max-train-beats", dest="max_train_beats", type=int)
    g.add_argument("--patient-minutes", dest="patient_minutes", type=float)
    g.add_argument("--seed", type=int)


# --- model directory ------------------------------------------------------

def save_model(out_dir, tm: "evaluate.TrainedModels") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dictionary(tm.classifier.d_normal, out / "dict_normal.csv")
    save_dictionary(tm.classifier.d_pvc, out / "dict_pvc.csv")
    codec.save_codebooks(tm.codec, out / "codebooks.json")
    meta = {"tau": tm.classifier.tau, "prd_class": tm.classifier.prd_class.prd_limit,
            "delta_normal": tm.deltas[Label.NORMAL], "delta_pvc": tm.deltas[Label.PVC]}
    (out / "classifier.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_roc_csv(tm.roc, out / "roc.csv")
    return out


def load_model(model_dir):
    d = Path(model_dir)
    for name in ("dict_normal.csv", "dict_pvc.csv", "codebooks.json", "classifier.json"):
        if not (d / name).exists():
            raise DataError(f"model directory {d} lacks {name}")
    dn, dv = load_dictionary(d / "dict_normal.csv"), load_dictionary(d / "dict_pvc.csv")
    meta = json.loads((d / "classifier.json").read_text())
    clf = ClassifierModel(dn, dv, meta["prd_class"], meta["tau"])
    return clf, codec.load_codebooks(d / "codebooks.json", dn, dv)


def _select(corpus, records):
    if not records:
        return corpus
    missing = [r for r in records if r not in corpus]
    if missing:
        raise DataError(f"records not found: {missing}")
    return {r: corpus[r] for r in records}


def _load_one(record_path, ann_path=None):
    record_path = Path(record_path)
    ann_path = Path(ann_path) if ann_path else record_path.with_name(record_path.stem + ".ann.csv")
    rec = read_record(record_path, record_path.stem)
    return rec, preprocess_record(rec, read_annotations(ann_path)).beats


# --- commands -------------------------------------------------------------

def cmd_synth(args) -> int:
    if not 0.0 <= args.pvc_rate <= 1.0:
        raise UsageError("--pvc-rate must lie in [0, 1]")
    recs = synth_corpus(args.n_records, args.pvc_rate, args.seed, args.duration, prefix=args.prefix)
    paths = write_corpus(recs, args.out)
    print(f"wrote {len(paths)} records to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = pipeline_config(load_config(args.config), args)
    corpus = _select(evaluate.load_corpus(args.data), args.records)
    beats = [b for rid in sorted(corpus) for b in corpus[rid].beats]
    seed = args.seed if args.seed is not None else cfg.ksvd.seed
    tm = evaluate.train_models(beats, cfg, seed, next(iter(corpus.values())).adc_bits)
    out = save_model(args.out, tm)
    print(f"tau={tm.classifier.tau:.6g} delta_normal={tm.deltas[Label.NORMAL]:.6g} "
          f"delta_pvc={tm.deltas[Label.PVC]:.6g} -> {out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    clf, _ = load_model(args.model)
    tau = args.tau if args.tau is not None else load_config(args.config).get("tau")
    if tau is not None:
        clf = clf.with_tau(tau)
    corpus = _select(evaluate.load_corpus(args.data), args.records)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ratios, truth = [], []
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "timestamp", "true_label", "ratio", "predicted_label"])
        for rid in sorted(corpus):
            for b in corpus[rid].beats:
                if b.label is Label.OTHER:
                    w.writerow([rid, b.timestamp, b.label.value, "", Label.NORMAL.value])
                    continue
                r = sparsity_ratio(clf, b)
                ratios.append(r)
                truth.append(b.label)
                w.writerow([rid, b.timestamp, b.label.value if b.label else "", repr(r),
                            label_for_ratio(r, clf.tau).value])
    print(f"labels written to {out}")
    if Label.PVC in truth and Label.NORMAL in truth:
        roc_path = out.with_name(out.stem + "_roc.csv")
        write_roc_csv(roc_from_ratios(ratios, truth), roc_path)
        print(f"ROC written to {roc_path}")
    return EXIT_OK


def _labels_for(args, clf, beats):
    if getattr(args, "label_script", None):
        labels = parse_label_script(args.label_script)
        if len(labels) != len(beats):
            raise UsageError(f"label script has {len(labels)} labels for {len(beats)} beats")
        return labels
    if getattr(args, "labels_from_annotations", False):
        return [b.label for b in beats]
    return [classify_beat(clf, b) if b.label is not Label.OTHER else Label.NORMAL for b in beats]


def cmd_compress(args) -> int:
    clf, cm = load_model(args.model)
    rec, beats = _load_one(args.record, args.annotations)
    labels = _labels_for(args, clf, beats)
    if args.all_beats:
        chosen = list(zip(beats, labels))
    else:
        trace = run_stream(beats, labels, 0, None)
        chosen = [(e.beat, e.label) for e in trace.transmitted]
    encs = codec.encode_stream([b for b, _ in chosen], [lab for _, lab in chosen], cm)
    codec.write_stream(args.out, rec.record_id, [e.bits for e in encs])
    total = sum(e.bit_count for e in encs)
    orig = codec.original_bits(adc_bits=cm.adc_bits)
    print(f"{len(encs)} of {len(beats)} beats encoded, {total} bits -> {args.out}")
    if encs:
        dec = codec.decode_stream([e.bits for e in encs], cm)
        prds = [prd(b.samples, d.samples) for (b, _), d in zip(chosen, dec)]
        print(f"compression ratio {orig * len(encs) / total:.2f}x on encoded beats, "
              f"{orig * len(beats) / total:.2f}x against the whole record")
        print(f"mean PRD {100 * np.mean(prds):.3f}% (max {100 * max(prds):.3f}%)")
    return EXIT_OK


def cmd_decode(args) -> int:
    _, cm = load_model(args.model)
    rid, frames = codec.read_stream(args.stream)
    beats = codec.decode_stream(frames, cm)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "timestamp", "label"] + [f"s{i}" for i in range(cm.normal.dictionary.m)])
        for b in beats:
            w.writerow([rid, b.timestamp, b.label.value] + [repr(float(v)) for v in b.samples])
    print(f"decoded {len(beats)} beats from record {rid} -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.label_script and args.labels_from_annotations:
        raise UsageError("choose at most one of --label-script / --labels-from-annotations")
    cfg = pipeline_config(load_config(args.config), args)
    if args.label_script and not args.record:
        labels = parse_label_script(args.label_script)
        beats = list(range(len(labels)))
        trace = run_stream(beats, labels, cfg.th, cfg.n_th, timestamps=beats)
    else:
        if not (args.record and (args.model or args.labels_from_annotations or args.label_script)):
            raise UsageError("simulate needs --record plus --model, or a label source")
        clf = load_model(args.model)[0] if args.model else None
        _, beats = _load_one(args.record, args.annotations)
        labels = _labels_for(args, clf, beats)
        trace = run_stream(beats, labels, cfg.th, cfg.n_th)
        if args.model:
            cm = load_model(args.model)[1]
            sent = [e for e in trace.transmitted]
            encs = codec.encode_stream([e.beat for e in sent], [e.label for e in sent], cm)
            print(f"end-to-end bits: {sum(e.bit_count for e in encs)} "
                  f"(raw: {codec.original_bits(adc_bits=cm.adc_bits) * len(beats)})")
    print("labels: " + "".join(l.value for l in trace.labels))
    print("flags:  " + "".join(str(f) for f in trace.flags))
    print(f"first notification at beat: {trace.first_notification}")
    print(f"stopped at beat: {trace.stopped_at}")
    print(f"transmitted beats: {len(trace.transmitted)}")
    return EXIT_OK


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    try:
        return int(env) if env else 1
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer")


def cmd_eval(args) -> int:
    cfg = pipeline_config(load_config(args.config), args)
    corpus = evaluate.load_corpus(args.data)
    master = args.seed if args.seed is not None else 0
    spec = None
    if args.partition:
        spec = replace(evaluate.fixed_partition(args.partition), patient_minutes=cfg.patient_minutes)
    rep = evaluate.mccv(corpus, args.proposal, args.iterations, master, cfg,
                        _workers(args), args.test_size, partition=spec)
    jl, summary = evaluate.write_report(rep, args.out)
    for m, (mean, sd, n) in rep.summary().items():
        print(f"{m:12s} {mean:.4f} +/- {sd:.4f} (n={n})")
    if rep.failures:
        print(f"{len(rep.failures)} iteration(s) failed; see {jl}")
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    op = OperatingPoint(args.se, args.sp, args.rho, args.beta_n, args.beta_v)
    cm = CostModel(args.fs, args.adc_bits, args.tariff, args.hours)
    print(f"{'mode':20s} {'bandwidth':>10s} {'MB':>9s} {'cost':>10s}")
    for name, b, cost in bandwidth_table(op, cm):
        print(f"{name:20s} {b:10.4%} {cost.megabytes:9.3f} {cost.cents:8.3f} c")
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvcdict", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic record corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-records", type=int, default=10)
    s.add_argument("--pvc-rate", type=float, default=0.1)
    s.add_argument("--duration", type=float, default=300.0, help="seconds per record")
    s.add_argument("--prefix", default="s")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="fit dictionaries, threshold and codebooks")
    s.add_argument("--data", required=True, help="directory of <id>.csv / <id>.ann.csv")
    s.add_argument("--out", required=True, help="model directory")
    s.add_argument("--records", nargs="*")
    _add_pipeline_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("classify", help="label every beat of the given records")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--records", nargs="*")
    s.add_argument("--tau", type=float, help="override the trained threshold")
    s.add_argument("--config", help="JSON run configuration (only its tau is used)")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("compress", help="encode a record's transmitted beats to a stream file")
    s.add_argument("--model", required=True)
    s.add_argument("--record", required=True)
    s.add_argument("--annotations")
    s.add_argument("--out", required=True)
    s.add_argument("--all-beats", action="store_true", help="encode every beat, not only flagged ones")
    s.add_argument("--labels-from-annotations", action="store_true")
    s.add_argument("--label-script")
    s.set_defaults(func=cmd_compress)

    s = sub.add_parser("decode", help="reconstruct beats from a stream file")
    s.add_argument("--model", required=True)
    s.add_argument("--stream", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("simulate", help="run the transmission state machine over a record")
    s.add_argument("--model")
    s.add_argument("--record")
    s.add_argument("--annotations")
    s.add_argument("--labels-from-annotations", action="store_true")
    s.add_argument("--label-script", help='e.g. "NNVNN"')
    _add_pipeline_flags(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("eval", help="Monte Carlo cross validation or a fixed partition")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--proposal", type=int, choices=(1, 2, 3), default=3)
    s.add_argument("--partition", help="fixed split P1..P4 instead of random draws")
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--test-size", type=int)
    s.add_argument("--workers", type=int, help=f"process pool size (default ${WORKERS_ENV} or 1)")
    _add_pipeline_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bandwidth", help="closed-form bandwidth and monitoring cost")
    s.add_argument("--se", type=float, required=True)
    s.add_argument("--sp", type=float, required=True)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--beta-n", type=float, default=1.0)
    s.add_argument("--beta-v", type=float, default=1.0)
    s.add_argument("--fs", type=float, default=360.0)
    s.add_argument("--adc-bits", type=int, default=11)
    s.add_argument("--tariff", type=float, default=1.5, help="cents per 100 kB")
    s.add_argument("--hours", type=float, default=10.0)
    s.set_defaults(func=cmd_bandwidth)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConstraintError as exc:
        print(f"constraint not met: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (DataError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
