"""
The whole command-line pipeline in one sitting: generate a corpus,
ingest it, train both stages, evaluate every split, render a heatmap.
"""

import os
import tempfile

from essayscore.cli import main

root = tempfile.mkdtemp(prefix="essayscore_demo_")
config = os.path.join(root, "pipeline.cfg")
with open(config, "w") as fh:
    fh.write(f"""\
data_path = {root}/essays.tsv
splits_dir = {root}/splits
models_dir = {root}/models
reports_dir = {root}/reports
heatmaps_dir = {root}/heatmaps
min_count = 2
embed_dim = 12
hidden_dim = 8
window_size = 3
n_corruptions = 8
embed_epochs = 5
alpha = 0.1
learning_rate = 0.003
lstm_dim = 8
layers = 1
dropout = 0.0
peepholes = full
epochs = 60
batch_size = 4
patience = 60
""")

steps = (
    ["synth", "--profile", "ablation", "--out", f"{root}/essays.tsv"],
    ["--config", config, "ingest"],
    ["--config", config, "train-embeddings"],
    ["--config", config, "train-scorer"],
    ["--config", config, "evaluate", "--split", "all"],
)
for argv in steps:
    print(f"\n$ essayscore {' '.join(argv)}")
    rc = main(argv)
    assert rc == 0, f"step failed with exit code {rc}"

# heatmap for the first validation essay
with open(f"{root}/splits/val.ids") as fh:
    first_val = next(line for line in fh if not line.startswith("#")).strip()
print(f"\n$ essayscore visualize --ids {first_val} --monochrome")
main(["--config", config, "visualize", "--ids", first_val, "--monochrome"])

print(f"\nartifacts under {root}:")
for dirpath, _, files in sorted(os.walk(root)):
    for name in sorted(files):
        rel = os.path.relpath(os.path.join(dirpath, name), root)
        print("  ", rel)
