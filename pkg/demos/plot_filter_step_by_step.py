"""
Tracking a target from bearings alone
=====================================

One episode, printed sub-step by sub-step. The observer flies a leg
perpendicular to the first bearing, then turns onto a second leg chosen by
the perpendicular-to-bearing rule. Watch the range error collapse once the
turn gives the filter a second viewpoint.
"""

import numpy as np

from botrl.env import BearingsOnlyEnv
from botrl.policies import PTBPolicy

env = BearingsOnlyEnv()
obs, truth = env.reset(7)
print("first bearing (deg):", np.degrees(env._trace.bearing[0]).round(2))
print("leg-1 heading (deg):", np.degrees(env.leg1_heading).round(2))

###############################################################################
# The decision is made from the belief alone.
action = PTBPolicy()(env.decision_point())
outcome = env.step(action)
print("leg-2 action:", action)

###############################################################################
# Range and position error along the episode
tr = outcome.trace
true_range = np.hypot(tr.relative[:, 0], tr.relative[:, 1])
est_range = np.hypot(tr.mean[:, 0], tr.mean[:, 1])
pos_err = np.hypot(*(tr.mean[:, :2] - tr.relative[:, :2]).T)
for k in range(len(tr)):
    print(f"step {k:2d} leg {tr.leg[k]}  range {true_range[k]:6.2f}  "
          f"estimate {est_range[k]:6.2f}  error {pos_err[k]:6.2f}")

print(f"terminal d_E {outcome.d_E:.3f}, d_M {outcome.d_M:.3f}, reward {outcome.reward:.3f}")
