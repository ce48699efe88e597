"""Monte Carlo cross validation over synthetic patients.

Draws patient splits whose test side holds 10-20% of all PVCs, trains a
fresh model on each, and summarises the spread of the metrics. Scaled down
so it finishes in well under a minute.
"""
import tempfile
import warnings

from pvcdict import KsvdConfig, PipelineConfig, corpus_from_records, mccv, write_report
from pvcdict.synth import synth_corpus, varied_rates

warnings.simplefilter("ignore", RuntimeWarning)

rates = varied_rates(16, seed=4, low=0.05, high=0.25, zero_fraction=0.0)
recs = synth_corpus(16, rates, seed=5, duration_s=100)
corpus = corpus_from_records((r.record, r.annotations) for r in recs)
cfg = PipelineConfig(ksvd=KsvdConfig(n_atoms=301, sparsity=6, iterations=2),
                     max_train_beats=250, patient_minutes=0.5, target_se=0.95)
rep = mccv(corpus, proposal=3, iterations=3, master_seed=11, cfg=cfg)
for it in rep.iterations:
    print(f"test {it.test_records}: Se={it.se:.3f} Sp={it.sp:.3f} b_tr={it.b_tr:.4f}")
for m, (mean, sd, n) in rep.summary().items():
    print(f"{m:11s} {mean:.4f} +/- {sd:.4f}  (n={n})")
with tempfile.TemporaryDirectory() as d:
    jl, summary = write_report(rep, d)
    print("report files:", jl.name, summary.name)
