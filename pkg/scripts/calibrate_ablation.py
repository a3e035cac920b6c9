"""Calibration sweep for the synthetic ablation ordering.

Trains vqa / vtqa-EF / vtqa-EF+LF per seed (AR is inference-only, so the
+AR variants reuse the trained params) and prints per-seed and median test
accuracy for the five ablation rows.
"""
import sys
import time
from dataclasses import replace
from statistics import median

from vtqa.data import SynthConfig, generate_synthetic
from vtqa import model as vm, training

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
batch = int(sys.argv[2]) if len(sys.argv) > 2 else 32
seeds = range(int(sys.argv[3]) if len(sys.argv) > 3 else 5)

tr, va, te = generate_synthetic(SynthConfig(n_samples=2000, clue_rate=0.9, noise=0.5, seed=0))
rows = {k: [] for k in ("vqa", "ef", "ef_lf", "ef_ar", "ef_lf_ar")}
t0 = time.time()
for seed in seeds:
    tc = training.TrainConfig(epochs=epochs, batch_size=batch, seed=seed)
    vqa = vm.desk_preset(variant="vqa", early_fusion=False, seed=seed)
    ef = vm.desk_preset(variant="vtqa", late_fusion=False, answer_recommendation=False, seed=seed)
    ef_lf = replace(ef, late_fusion=True)

    res_vqa = training.train(vqa, tc, tr, va)
    rows["vqa"].append(training.evaluate(res_vqa.params, res_vqa.config, te, res_vqa.vocab, res_vqa.answer_vocab).accuracy)

    res_ef = training.train(ef, tc, tr, va)
    rows["ef"].append(training.evaluate(res_ef.params, res_ef.config, te, res_ef.vocab, res_ef.answer_vocab).accuracy)
    cfg_ar = replace(res_ef.config, answer_recommendation=True)
    rows["ef_ar"].append(training.evaluate(res_ef.params, cfg_ar, te, res_ef.vocab, res_ef.answer_vocab).accuracy)

    res_lf = training.train(ef_lf, tc, tr, va)
    rows["ef_lf"].append(training.evaluate(res_lf.params, res_lf.config, te, res_lf.vocab, res_lf.answer_vocab).accuracy)
    cfg_lfar = replace(res_lf.config, answer_recommendation=True)
    rows["ef_lf_ar"].append(training.evaluate(res_lf.params, cfg_lfar, te, res_lf.vocab, res_lf.answer_vocab).accuracy)
    print(f"seed {seed} done ({time.time()-t0:.0f}s)", {k: round(v[-1], 3) for k, v in rows.items()}, flush=True)

print(f"\nepochs={epochs} batch={batch} total {time.time()-t0:.0f}s")
for k, v in rows.items():
    print(f"{k:10s} median {median(v):.3f}  runs {[round(x,3) for x in v]}")
