"""Beat compression: OMP codes, quantization and Huffman books.

Calibrates the quantizer step so that the mean reconstruction error stays
within a 9% PRD budget, then encodes, decodes and reports the bit cost.
"""
import warnings

import numpy as np

from pvcdict import KsvdConfig, Label, codec, corpus_from_records, fit_ksvd, omp_solve, prd
from pvcdict.sparse_core import stack_beats
from pvcdict.synth import synth_corpus

warnings.simplefilter("ignore", RuntimeWarning)

recs = synth_corpus(3, 0.0, seed=3, duration_s=240)
corpus = corpus_from_records((r.record, r.annotations) for r in recs)
beats = [b for rid in sorted(corpus) for b in corpus[rid].beats]
fit, rest = beats[: len(beats) // 3], beats[len(beats) // 3:]
D = fit_ksvd(stack_beats(fit), KsvdConfig(n_atoms=320, sparsity=8, iterations=4), Label.NORMAL).dictionary

codes = [omp_solve(D, b, 0.088) for b in rest]
table = codec.build_quant_tables(codes, 1.0)
grid, errs = codec.delta_sweep(rest, D, 0.088, table, codes=codes)
for delta, err in list(zip(grid, errs))[::8]:
    print(f"delta {delta:.4f} -> mean PRD {err:.4f}")
delta = codec.calibrate_delta(rest, D, 0.088, 0.09, table, codes=codes)
print(f"calibrated delta = {delta:.4f}")

cc = codec.train_class_codec(D, codes, table.with_delta(delta))
diffs = np.diff([0] + [b.timestamp for b in rest if b.record_id == "s001"]).tolist()
model = codec.CodecModel(cc, cc, codec.train_timestamp_book(diffs))

record = [b for b in rest if b.record_id == "s001"]
encs = codec.encode_stream(record, [Label.NORMAL] * len(record), model)
dec = codec.decode_stream([e.bits for e in encs], model)
errs = [prd(b.samples, d.samples) for b, d in zip(record, dec)]
bits = sum(e.bit_count for e in encs)
print(f"{len(record)} beats in {bits} bits: {bits / len(record):.1f} bits/beat, "
      f"ratio {len(record) * codec.original_bits() / bits:.1f}x, mean PRD {np.mean(errs):.4f}")
