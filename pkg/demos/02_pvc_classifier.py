"""Rival-dictionary PVC detection.

Trains a Normal and a PVC dictionary on a few synthetic patients, picks the
threshold for 95% sensitivity on held-out training beats, and scores two
patients the models have never seen. The ROC on those patients still
reaches the (1, 1) corner, but the tuned threshold sits low: ratios drift
between patients. The full pipeline avoids this by training on the first
minutes of every monitored patient.
"""
import warnings

import numpy as np

from pvcdict import KsvdConfig, Label, PipelineConfig, corpus_from_records, roc_sweep, train_models
from pvcdict.synth import synth_corpus

warnings.simplefilter("ignore", RuntimeWarning)

recs = synth_corpus(6, 0.15, seed=21, duration_s=150)
corpus = corpus_from_records((r.record, r.annotations) for r in recs)
ids = sorted(corpus)
train = [b for rid in ids[:4] for b in corpus[rid].beats]
cfg = PipelineConfig(ksvd=KsvdConfig(n_atoms=301, sparsity=6, iterations=3),
                     max_train_beats=300, target_se=0.95)
tm = train_models(train, cfg, seed=0)
print(f"threshold tau = {tm.classifier.tau:.3f}")

test = [b for rid in ids[4:] for b in corpus[rid].beats if b.label in (Label.NORMAL, Label.PVC)]
roc, ratios = roc_sweep(tm.classifier, test)
truth = np.array([b.label is Label.PVC for b in test])
ratios = np.array(ratios)
print(f"median ratio  PVC: {np.median(ratios[truth]):.3f}  normal: {np.median(ratios[~truth]):.3f}")
pred = ratios < tm.classifier.tau
print(f"held-out patients: Se={pred[truth].mean():.3f}  Sp={(~pred[~truth]).mean():.3f}")
best = max(roc, key=lambda p: p.se + p.sp)
print(f"best ROC point: tau={best.tau:.3f} Se={best.se:.3f} Sp={best.sp:.3f}")
