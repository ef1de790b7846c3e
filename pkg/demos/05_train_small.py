"""End-to-end training on a small synthetic set (about a minute on CPU).

Uses reduced widths and a raised learning rate so the demo stays quick;
the library defaults reproduce the full-size model instead.
"""

import numpy as np

from hyperx.dataset import SyntheticSpec, generate_synthetic, split_segments
from hyperx.model import H2Model, ModelConfig, deserialize_model
from hyperx.sigproc import preprocess_dataset
from hyperx.trainer import TrainConfig, evaluate, train

spec = SyntheticSpec(num_subjects=3, trials_per_subject=9, seed=11, noise_level=0.3)
segs = preprocess_dataset(generate_synthetic(spec))

model_cfg = ModelConfig(
    variant="phc",
    eeg_channels=(20, 40),
    ecg_channels=(12, 24),
    eye_channels=(8, 16),
    eeg_hidden=20,
    ecg_hidden=12,
    eye_hidden=8,
    gsr_width=16,
    fusion_widths=(64, 32, 16),
    dropout_p=0.2,  # the full-width default of 0.5 starves this small fusion
)
train_cfg = TrainConfig(max_lr=5e-3, epochs=20, patience=20, batch_size=16, seed=0,
                        target="arousal", track_train_accuracy=True)

tr, te = split_segments(segs, train_cfg.target, train_cfg.train_frac, train_cfg.split_seed)
model = H2Model(model_cfg, seed=0)
print(f"parameters: {model.count_parameters()['total']}  train/test: {len(tr)}/{len(te)}")

result = train(
    model, tr, te, train_cfg,
    callback=lambda e, r: print(
        f"epoch {e:2d}: loss {r['train_loss']:.3f}  train acc {r['train_accuracy']:.2f}  "
        f"test F1 {r['test_macro_f1']:.3f}"
    ),
)

best, extra = deserialize_model(result.best_checkpoint)
report = evaluate(best, te, train_cfg.target)
print(f"\nbest epoch {result.best_epoch}: test macro-F1 {report.macro_f1:.3f}, "
      f"accuracy {report.accuracy_percent:.1f}%")
print("confusion matrix (rows = true class):")
for row in report.confusion:
    print("  ", row)
