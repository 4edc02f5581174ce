"""
Exporting a trace for plotting
==============================

Traces are plain CSV: one row per sub-step with the observer, the target,
the true relative state and the filter belief. Any plotting tool can read
them.
"""

import tempfile
from pathlib import Path

import numpy as np

from botrl.env import read_trace_csv
from botrl.evaluation import demo_episode
from botrl.policies import ITOPolicy, PTBPolicy

out = Path(tempfile.mkdtemp())
for policy in (PTBPolicy(), ITOPolicy()):
    outcome, path = demo_episode(policy, 3, out_dir=out)
    print(path, "d_E", round(outcome.d_E, 3))

###############################################################################
# Leg-1 rows are identical across policies; the traces part at the turn.
a = read_trace_csv(out / "trace_ptb_3.csv")
b = read_trace_csv(out / "trace_ito_3.csv")
same = np.all(a.observer == b.observer, axis=1)
print("rows shared by both traces:", int(same.sum()), "of", len(a))
print(Path(out / "trace_ptb_3.csv").read_text().splitlines()[0])
