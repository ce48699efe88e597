"""Sparse-dictionary PVC detection, beat-trio streaming and beat compression for ECG."""
from .bandwidth import (CostModel, OperatingPoint, b_classification_only, b_compression_only,
                        b_trio, bandwidth_table, monitoring_cost)
from .classifier import ClassifierModel, classify_beat, pick_tau_for_sensitivity, roc_sweep, sparsity_ratio
from . import codec
from .codec import CodecModel, EncodedBeat, calibrate_delta, decode_beat, encode_beat
from .evaluate import (IterationResult, MccvReport, PartitionSpec, PipelineConfig, corpus_from_records,
                       fixed_partition, load_corpus, make_random_partition, mccv, run_pipeline,
                       train_models, write_report)
from .exceptions import ConstraintError, DataError, DecodeError, DomainError, PvcDictError, UsageError
from .ksvd import KsvdConfig, fit_ksvd, train_dictionary
from .preprocess import Annotation, RawRecord, preprocess_record
from .sparse_core import BeatVector, Dictionary, FidelityTarget, Label, SparseCode, omp_solve, prd, reconstruct
from .streamer import Decision, Streamer, offline_flags, parse_label_script, run_stream, worst_case_overhead

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "BeatVector",
    "ClassifierModel",
    "CodecModel",
    "ConstraintError",
    "CostModel",
    "DataError",
    "Decision",
    "DecodeError",
    "Dictionary",
    "DomainError",
    "EncodedBeat",
    "FidelityTarget",
    "IterationResult",
    "KsvdConfig",
    "Label",
    "MccvReport",
    "OperatingPoint",
    "PartitionSpec",
    "PipelineConfig",
    "PvcDictError",
    "RawRecord",
    "SparseCode",
    "Streamer",
    "UsageError",
    "b_classification_only",
    "b_compression_only",
    "b_trio",
    "bandwidth_table",
    "calibrate_delta",
    "classify_beat",
    "codec",
    "corpus_from_records",
    "decode_beat",
    "encode_beat",
    "fit_ksvd",
    "fixed_partition",
    "load_corpus",
    "make_random_partition",
    "mccv",
    "monitoring_cost",
    "offline_flags",
    "omp_solve",
    "parse_label_script",
    "pick_tau_for_sensitivity",
    "prd",
    "preprocess_record",
    "reconstruct",
    "roc_sweep",
    "run_pipeline",
    "run_stream",
    "sparsity_ratio",
    "train_dictionary",
    "train_models",
    "worst_case_overhead",
    "write_report",
]
