"""
A small sweep over confounder strength
======================================

Run the grid runner over three values of eta with one seed and a reduced
sample size, then read back the per-figure table.
"""
import tempfile
from pathlib import Path

from textcate.config import config_from_dict
from textcate.experiment import run

cfg = config_from_dict({
    "seeds": [0],
    "dgp": {"n": 4000, "n_test": 1000},
    "sweep": {"eta": [0.5, 1.0, 1.5]},
})
out = Path(tempfile.mkdtemp())
summary = run(cfg, out)
print((out / "figures" / "figure_eta.csv").read_text())
