"""
Comparing the geometric baselines
=================================

Every policy sees the same scenarios, the same leg-1 run and the same
measurement noise. Only the leg-2 heading differs, so differences in the
table come from the decision alone.
"""

from botrl.evaluation import EvalConfig, compare
from botrl.policies import ITOPolicy, PTBPolicy, RandomPolicy

episodes = 500  # raise to 5000 for the full comparison

comp = compare({"ptb": PTBPolicy(), "ito": ITOPolicy(), "random": RandomPolicy()},
               EvalConfig(episodes=episodes))
print(comp.to_text())

###############################################################################
# The information-greedy turn wins on average but has a heavy tail:
# it sometimes steers the predicted track straight at the target.
ito = comp.records["ito"]
worst = sorted(ito, key=lambda r: r.d_E)[-5:]
for r in worst:
    print(f"seed {r.seed}: action {r.action}, d_E {r.d_E:.1f}")
