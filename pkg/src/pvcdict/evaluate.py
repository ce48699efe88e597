"""Patient-specific partitions, the train/test pipeline and Monte Carlo cross validation."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import codec
from .bandwidth import OperatingPoint, b_trio
from .classifier import ClassifierModel, pick_tau_for_sensitivity, ratio_from_codes, roc_from_ratios
from .exceptions import ConstraintError, DataError, PvcDictError, UsageError
from .ksvd import KsvdConfig, fit_ksvd
from .preprocess import preprocess_record, read_annotations, read_record
from .sparse_core import BeatVector, Label, omp_solve, prd, stack_beats
from .streamer import offline_flags, run_stream

log = logging.getLogger(__name__)

PACED_RECORDS = frozenset({"102", "104", "107", "217"})

MITBIH_RECORDS = tuple(str(r) for r in (
    100, 101, 102, 103, 104, 105, 106, 107, 108, 109,
    111, 112, 113, 114, 115, 116, 117, 118, 119,
    121, 122, 123, 124,
    200, 201, 202, 203, 205, 207, 208, 209, 210,
    212, 213, 214, 215, 217, 219, 220, 221, 222, 223,
    228, 230, 231, 232, 233, 234,
))
ELIGIBLE_RECORDS = tuple(r for r in MITBIH_RECORDS if r not in PACED_RECORDS)

# Record lists as published, in order; Partition-1's test list repeats 124.
_TABLE3 = {
    "P1": (
        "100 105 106 108 109 111 114 116 118 119 121 123 124",
        "200 201 202 203 205 207 208 209 210 213 124 215 219 221 223 228 230 231 233 234",
    ),
    "P2": (
        "100 101 103 105 106 108 109 111 112 113 114 115 116 118 119 121 122 123 124",
        "200 201 202 203 205 207 208 209 210 212 213 214 215 219 220 221 222 223 228 230 231 232 233 234",
    ),
    "P3": (
        "101 106 108 109 112 114 115 116 118 119 122 124 201 203 205 207 208 209 215 220 223 230",
        "100 103 105 111 113 117 121 123 200 202 210 212 213 214 219 221 222 228 231 232 233 234",
    ),
    "P4": (
        "105 106 108 109 111 116 118 124 200 201 202 203 205 207 209 210 212 214 215 223 228 232",
        "100 101 103 112 113 114 115 117 119 121 122 123 208 213 219 220 221 222 230 231 233 234",
    ),
}

PROPOSALS = {
    2: {"share": (0.45, 0.55), "test_size": None},  # None -> half of the records
    3: {"share": (0.10, 0.20), "test_size": 4},
}
MAX_DRAWS = 100_000


# --- partitions -----------------------------------------------------------

@dataclass(frozen=True)
class PartitionSpec:
    name: str
    train_records: Tuple[str, ...]
    test_records: Tuple[str, ...]
    patient_minutes: Optional[float] = None  # None -> PipelineConfig.patient_minutes
    pvc_share: Optional[Tuple[float, float]] = None
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        tr, te = set(self.train_records), set(self.test_records)
        if tr & te:
            raise UsageError(f"{self.name}: records in both sets: {sorted(tr & te)}")
        bad = (tr | te) & PACED_RECORDS
        if bad:
            raise UsageError(f"{self.name}: paced records are excluded: {sorted(bad)}")

    def missing(self, available) -> List[str]:
        avail = set(available)
        return [r for r in self.train_records + self.test_records if r not in avail]


def fixed_partition(name: str) -> PartitionSpec:
    """Hand-picked record split.

    Published lists are kept in order; a test record that also appears in
    the training list (Partition-1's repeated 124) is dropped from the test
    side and reported in ``notes``.
    """
    key = name.upper().replace("PARTITION-", "P").replace("PARTITION", "P")
    if key not in _TABLE3:
        raise UsageError(f"unknown partition {name!r}; expected one of {sorted(_TABLE3)}")
    train_s, test_s = _TABLE3[key]
    train = tuple(train_s.split())
    test, notes = [], []
    for r in test_s.split():
        if r in train:
            notes.append(f"test record {r} also listed for training; dropped from test set")
        elif r in test:
            notes.append(f"test record {r} listed twice")
        else:
            test.append(r)
    return PartitionSpec(key, train, tuple(test), notes=tuple(notes))


def make_random_partition(pvc_counts: Mapping[str, int], proposal: int, seed,
                          test_size: Optional[int] = None,
                          patient_minutes: Optional[float] = None) -> PartitionSpec:
    """Rejection-sample a subject split whose test side holds the proposal's PVC share.

    Parameters
    ----------
    pvc_counts : mapping
        Record id -> number of PVC beats. Paced records are ignored.
    proposal : {2, 3}
    seed : int or numpy SeedSequence
    """
    if proposal not in PROPOSALS:
        raise UsageError(f"proposal must be one of {sorted(PROPOSALS)}")
    lo, hi = PROPOSALS[proposal]["share"]
    records = sorted(r for r in pvc_counts if r not in PACED_RECORDS)
    counts = np.array([pvc_counts[r] for r in records], dtype=float)
    total = counts.sum()
    if total <= 0:
        raise DataError("no PVC beats in the corpus; the share constraint is undefined")
    if test_size is None:
        test_size = PROPOSALS[proposal]["test_size"] or len(records) // 2
    if not 0 < test_size < len(records):
        raise UsageError(f"test size {test_size} impossible with {len(records)} records")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_DRAWS):
        pick = rng.choice(len(records), size=test_size, replace=False)
        share = counts[pick].sum() / total
        if lo <= share <= hi:
            test = tuple(records[i] for i in sorted(pick))
            train = tuple(r for r in records if r not in test)
            return PartitionSpec(f"proposal{proposal}", train, test, patient_minutes, (lo, hi))
    raise ConstraintError(
        f"no admissible proposal-{proposal} partition found in {MAX_DRAWS} draws"
    )


# --- corpus ---------------------------------------------------------------

@dataclass
class RecordBeats:
    record_id: str
    beats: List[BeatVector]
    fs: float = 360.0
    adc_bits: int = 11
    skipped: int = 0

    @property
    def n_pvc(self):
        return sum(b.label is Label.PVC for b in self.beats)

    @property
    def n_normal(self):
        return sum(b.label is Label.NORMAL for b in self.beats)


def corpus_from_records(pairs) -> Dict[str, RecordBeats]:
    """Preprocess ``(RawRecord, annotations)`` pairs into a record-id keyed corpus."""
    out = {}
    for rec, anns in pairs:
        seg = preprocess_record(rec, anns)
        out[rec.record_id] = RecordBeats(rec.record_id, seg.beats, rec.fs, rec.adc_bits, seg.skipped_count)
    return out


def load_corpus(directory) -> Dict[str, RecordBeats]:
    """Read every ``<id>.csv`` + ``<id>.ann.csv`` pair in ``directory``."""
    directory = Path(directory)
    pairs = []
    for path in sorted(directory.glob("*.csv")):
        if path.name.endswith(".ann.csv"):
            continue
        ann = path.with_name(path.stem + ".ann.csv")
        if not ann.exists():
            raise DataError(f"missing annotation file for {path.name}")
        pairs.append((read_record(path, path.stem), read_annotations(ann)))
    if not pairs:
        raise DataError(f"no records found in {directory}")
    return corpus_from_records(pairs)


# --- pipeline -------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    prd_class: float = 0.09
    prd_int: float = codec.DEFAULT_PRD_INT
    prd_compr: float = codec.DEFAULT_PRD_COMPR
    target_se: float = 0.99
    th: int = 0
    n_th: Optional[int] = None
    ksvd: KsvdConfig = KsvdConfig()
    holdout_fraction: float = 0.2
    max_train_beats: Optional[int] = None  # per class, for desk-scale runs
    patient_minutes: float = 5.0

    def __post_init__(self):
        if self.prd_int > self.prd_compr:
            raise UsageError("prd_int must not exceed prd_compr")
        for name in ("prd_class", "prd_int", "prd_compr"):
            if not 0 < getattr(self, name) < 1:
                raise UsageError(f"{name} must lie in (0, 1)")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0

    @property
    def se(self):
        n = self.tp + self.fn
        return self.tp / n if n else math.nan

    @property
    def sp(self):
        n = self.tn + self.fp
        return self.tn / n if n else math.nan

    @property
    def total(self):
        return self.tp + self.fn + self.tn + self.fp


@dataclass
class IterationResult:
    partition: str
    seed: Optional[int]
    train_records: List[str]
    test_records: List[str]
    confusion: ConfusionCounts
    se: float
    sp: float
    tau: float
    rho: float
    beta_n: float
    beta_v: float
    b_tr: float
    b_measured: float
    mean_prd: float
    n_test_beats: int
    n_transmitted: int
    delta_n: float
    delta_v: float
    leak_free: bool
    lossless_ok: bool
    notes: List[str] = field(default_factory=list)

    def to_json(self):
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d


@dataclass
class PipelineArtifacts:
    """Everything trained inside one iteration, kept for leak auditing."""

    classifier: ClassifierModel
    codec: codec.CodecModel
    train_keys: set
    calibration_keys: set
    test_keys: set


def _split_beats(corpus, spec: PartitionSpec, minutes: float):
    train, test = [], {}
    for rid in spec.train_records:
        train.extend(b for b in corpus[rid].beats if b.label is not Label.OTHER)
    for rid in spec.test_records:
        rb = corpus[rid]
        carve = minutes * 60.0 * rb.fs
        train.extend(b for b in rb.beats if b.timestamp < carve and b.label is not Label.OTHER)
        test[rid] = [b for b in rb.beats if b.timestamp >= carve]
    return train, test


def _holdout(beats, fraction):
    cut = len(beats) - int(math.ceil(fraction * len(beats)))
    return beats[:cut], beats[cut:]


@dataclass
class TrainedModels:
    classifier: ClassifierModel
    codec: codec.CodecModel
    deltas: Dict[Label, float]
    ts_diffs: List[int]
    dict_beats: List[BeatVector]
    cal_beats: List[BeatVector]
    roc: list

    @property
    def dictionaries(self):
        return {Label.NORMAL: self.classifier.d_normal, Label.PVC: self.classifier.d_pvc}

    @property
    def codec_by_label(self):
        return {Label.NORMAL: self.codec.normal, Label.PVC: self.codec.pvc}


def train_models(train: Sequence[BeatVector], cfg: PipelineConfig = PipelineConfig(),
                 seed: Optional[int] = None, adc_bits: int = 11) -> TrainedModels:
    """Fit both dictionaries, the threshold and the codec from labelled training beats.

    Per class, the last ``cfg.holdout_fraction`` of the beats (in record
    order) is held out from dictionary fitting. That slice sets the
    threshold, the quantizer ranges, the step size and the Huffman books,
    since codes of beats a dictionary was fitted on are unrealistically
    sparse. Beats labelled Other are ignored.
    """
    train = [b for b in train if b.label in (Label.NORMAL, Label.PVC)]
    by_class = {lab: [b for b in train if b.label is lab] for lab in (Label.NORMAL, Label.PVC)}
    for lab, beats in by_class.items():
        if len(beats) < 2:
            raise DataError(f"training set has too few {lab.name} beats ({len(beats)})")
    rng = np.random.default_rng(seed)
    dict_beats, cal_beats = {}, {}
    for lab, beats in by_class.items():
        fit, cal = _holdout(beats, cfg.holdout_fraction)
        if cfg.max_train_beats is not None and len(fit) > cfg.max_train_beats:
            keep = np.sort(rng.choice(len(fit), cfg.max_train_beats, replace=False))
            fit = [fit[i] for i in keep]
        dict_beats[lab], cal_beats[lab] = fit, cal

    ks = replace(cfg.ksvd, seed=cfg.ksvd.seed if seed is None else int(seed) % (2 ** 31))
    dicts = {lab: fit_ksvd(stack_beats(b), ks, lab).dictionary for lab, b in dict_beats.items()}
    model = ClassifierModel(dicts[Label.NORMAL], dicts[Label.PVC], cfg.prd_class)

    # operating point from held-out training beats only
    cal_all = cal_beats[Label.NORMAL] + cal_beats[Label.PVC]
    cal_ratios = [ratio_from_codes(omp_solve(model.d_pvc, b, cfg.prd_class),
                                   omp_solve(model.d_normal, b, cfg.prd_class)) for b in cal_all]
    roc = roc_from_ratios(cal_ratios, [b.label for b in cal_all])
    tau = pick_tau_for_sensitivity(roc, cfg.target_se).tau
    model = model.with_tau(tau)

    class_codecs = {}
    deltas = {}
    for lab in (Label.NORMAL, Label.PVC):
        D = dicts[lab]
        codes = [omp_solve(D, b, cfg.prd_int) for b in cal_beats[lab]]
        table = codec.build_quant_tables(codes, 1.0)
        delta = codec.calibrate_delta(cal_beats[lab], D, cfg.prd_int, cfg.prd_compr, table, codes=codes)
        deltas[lab] = delta
        class_codecs[lab] = codec.train_class_codec(D, codes, table.with_delta(delta))
    ts_diffs = []
    train_by_record: Dict[str, list] = {}
    for b in train:
        train_by_record.setdefault(b.record_id, []).append(b)
    for beats in train_by_record.values():
        flags = offline_flags([b.label for b in beats])
        prev = 0
        for b, f in zip(beats, flags):
            if f:
                ts_diffs.append(b.timestamp - prev)
                prev = b.timestamp
    cmodel = codec.CodecModel(class_codecs[Label.NORMAL], class_codecs[Label.PVC],
                              codec.train_timestamp_book(ts_diffs), cfg.prd_int,
                              adc_bits)

    return TrainedModels(model, cmodel, deltas, ts_diffs,
                         [b for bs in dict_beats.values() for b in bs], cal_all, roc)


def _ratio_of_sums(orig, coded):
    return orig / coded if coded else math.nan


def run_pipeline(spec: PartitionSpec, corpus: Mapping[str, RecordBeats],
                 cfg: PipelineConfig = PipelineConfig(), seed: Optional[int] = None,
                 keep_artifacts: bool = False):
    """Train on one partition and evaluate on its test records.

    Returns
    -------
    IterationResult, or ``(IterationResult, PipelineArtifacts)`` when
    ``keep_artifacts`` is set.
    """
    missing = spec.missing(corpus)
    if missing:
        raise DataError(f"{spec.name}: records not available: {missing}")
    notes = list(spec.notes)
    minutes = spec.patient_minutes if spec.patient_minutes is not None else cfg.patient_minutes
    train, test = _split_beats(corpus, spec, minutes)
    try:
        tm = train_models(train, cfg, seed, adc_bits=next(iter(corpus.values())).adc_bits)
    except DataError as exc:
        raise DataError(f"{spec.name}: {exc}") from exc
    model, cmodel, dicts = tm.classifier, tm.codec, tm.dictionaries
    tau, class_codecs, deltas, ts_diffs = model.tau, tm.codec_by_label, tm.deltas, tm.ts_diffs
    dict_beats, cal_all = tm.dict_beats, tm.cal_beats

    # test
    tp = fn = tn = fp = 0
    orig_bits = codec.original_bits(adc_bits=cmodel.adc_bits)
    sent_bits = 0
    prds = []
    n_test = 0
    n_sent = 0
    lossless = True
    class_bits = {Label.NORMAL: [0, 0, 0], Label.PVC: [0, 0, 0]}  # orig, coded, beats
    for rid in spec.test_records:
        beats = test[rid]
        labels = []
        for b in beats:
            if b.label is Label.OTHER:
                labels.append(Label.NORMAL)
                continue
            n_test += 1
            cv, cn = omp_solve(model.d_pvc, b, cfg.prd_class), omp_solve(model.d_normal, b, cfg.prd_class)
            pred = Label.PVC if ratio_from_codes(cv, cn) < tau else Label.NORMAL
            labels.append(pred)
            if b.label is Label.PVC:
                tp += pred is Label.PVC
                fn += pred is Label.NORMAL
            else:
                tn += pred is Label.NORMAL
                fp += pred is Label.PVC
            # compression-only accounting per true class
            code = omp_solve(dicts[b.label], b, cfg.prd_int)
            payload, _ = codec.encode_code(code, class_codecs[b.label])
            class_bits[b.label][0] += orig_bits
            class_bits[b.label][1] += 1 + len(payload)
            class_bits[b.label][2] += 1
        trace = run_stream(beats, labels, cfg.th, cfg.n_th)
        prev = None
        for e in trace.transmitted:
            enc = codec.encode_beat(e.beat, e.label, cmodel, e.timestamp, prev)
            dec = codec.decode_beat(enc.bits, cmodel, prev)
            lossless &= dec.timestamp == e.timestamp and dec.label is e.label
            prds.append(prd(e.beat.samples, dec.samples))
            sent_bits += enc.bit_count
            n_sent += 1
            prev = e.timestamp
    conf = ConfusionCounts(tp, fn, tn, fp)
    n_pvc = tp + fn
    rho = n_pvc / n_test if n_test else math.nan
    # timestamp cost for the per-class ratios: mean transmitted timestamp length
    ts_mean = float(np.mean([cmodel.timestamp_book.symbol_bits(d) for d in ts_diffs])) if ts_diffs else 0.0
    beta = {}
    for lab, (ob, cb, count) in class_bits.items():
        beta[lab] = _ratio_of_sums(ob, cb + ts_mean * count)
    se, sp = conf.se, conf.sp
    b_tr = math.nan
    if all(math.isfinite(v) for v in (se, sp, rho, beta[Label.NORMAL], beta[Label.PVC])):
        op = OperatingPoint(se, sp, rho, max(1.0, beta[Label.NORMAL]), max(1.0, beta[Label.PVC]))
        b_tr = b_trio(op)
    elif n_pvc == 0:
        notes.append("no PVC beats in test data; Se undefined")

    train_keys = {b.key for b in dict_beats}
    cal_keys = {b.key for b in cal_all} | {b.key for b in train}
    test_keys = {b.key for bs in test.values() for b in bs}
    leak_free = not (test_keys & (train_keys | cal_keys))
    if not leak_free:
        raise DataError(f"{spec.name}: test beats leaked into training structures")

    result = IterationResult(
        partition=spec.name,
        seed=None if seed is None else int(seed),
        train_records=list(spec.train_records),
        test_records=list(spec.test_records),
        confusion=conf,
        se=se,
        sp=sp,
        tau=float(tau),
        rho=rho,
        beta_n=beta[Label.NORMAL],
        beta_v=beta[Label.PVC],
        b_tr=b_tr,
        b_measured=sent_bits / (orig_bits * n_test) if n_test else math.nan,
        mean_prd=float(np.mean(prds)) if prds else math.nan,
        n_test_beats=n_test,
        n_transmitted=n_sent,
        delta_n=deltas[Label.NORMAL],
        delta_v=deltas[Label.PVC],
        leak_free=leak_free,
        lossless_ok=bool(lossless),
        notes=notes,
    )
    if keep_artifacts:
        return result, PipelineArtifacts(model, cmodel, train_keys, cal_keys, test_keys)
    return result


# --- MCCV -----------------------------------------------------------------

REPORT_METRICS = ("se", "sp", "beta_n", "beta_v", "b_tr", "b_measured", "mean_prd")


@dataclass
class MccvReport:
    proposal: int
    master_seed: int
    seeds: List[int]
    iterations: List[IterationResult]
    failures: List[dict]

    def summary(self) -> Dict[str, Tuple[float, float, int]]:
        """Metric -> (mean, population sd, count of finite values)."""
        out = {}
        for m in REPORT_METRICS:
            vals = np.array([getattr(it, m) for it in self.iterations], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size:
                out[m] = (float(vals.mean()), float(vals.std()), int(vals.size))
            else:
                out[m] = (math.nan, math.nan, 0)
        return out


def iteration_seeds(master_seed: int, iterations: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(iterations)]


def _one_iteration(args):
    corpus, proposal, seed, cfg, test_size, fixed = args
    try:
        if fixed is not None:
            spec = fixed
        else:
            counts = {rid: rb.n_pvc for rid, rb in corpus.items()}
            spec = make_random_partition(counts, proposal, seed, test_size, cfg.patient_minutes)
        return run_pipeline(spec, corpus, cfg, seed), None
    except PvcDictError as exc:
        return None, {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


def mccv(corpus: Mapping[str, RecordBeats], proposal: int, iterations: int = 100,
         master_seed: int = 0, cfg: PipelineConfig = PipelineConfig(),
         workers: int = 1, test_size: Optional[int] = None,
         partition: Optional[PartitionSpec] = None) -> MccvReport:
    """Average the pipeline over seeded random partitions.

    Proposal 1 (or an explicit ``partition``) repeats one fixed split; its
    iterations all reuse ``master_seed`` so repeated runs are identical.
    Iteration failures are recorded in ``failures``; only a run where every
    iteration fails raises.
    """
    if iterations < 1:
        raise UsageError("iterations must be >= 1")
    if partition is None and proposal == 1:
        partition = fixed_partition("P4")
    elif partition is None and proposal not in PROPOSALS:
        raise UsageError(f"unknown proposal {proposal}")
    if partition is not None:
        seeds = [int(master_seed)] * iterations
    else:
        seeds = iteration_seeds(master_seed, iterations)
    jobs = [(corpus, proposal, s, cfg, test_size, partition) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_iteration, jobs))
    else:
        outcomes = [_one_iteration(j) for j in jobs]
    results = [r for r, _ in outcomes if r is not None]
    failures = [f for _, f in outcomes if f is not None]
    for f in failures:
        log.warning("MCCV iteration failed: %s", f["error"])
    if not results:
        raise ConstraintError(f"all {iterations} MCCV iterations failed; first: {failures[0]['error']}")
    return MccvReport(proposal, master_seed, seeds, results, failures)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def write_report(report: MccvReport, out_dir) -> Tuple[Path, Path]:
    """JSON-lines per iteration plus a summary CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jl = out_dir / "mccv_iterations.jsonl"
    with jl.open("w") as fh:
        for it in report.iterations:
            fh.write(json.dumps(it.to_json(), sort_keys=True, default=_json_default) + "\n")
        for f in report.failures:
            fh.write(json.dumps({"failure": f}, sort_keys=True) + "\n")
    summary = out_dir / "mccv_summary.csv"
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "sd", "n"])
        for m, (mean, sd, n) in report.summary().items():
            w.writerow([m, repr(mean), repr(sd), n])
    return jl, summary


def read_report_lines(path) -> List[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
