"""
Training a Q-network on single-turn episodes
============================================

Each episode is one decision with a terminal reward, so the Q-value of an
action is simply the expected reward of turning that way. A short run
already separates good headings from bad ones; the full 50,000 episodes
take a few minutes.
"""

import numpy as np

from botrl.dqn import Hyperparams, train
from botrl.env import BearingsOnlyEnv, RewardParams
from botrl.evaluation import EvalConfig, compare
from botrl.policies import DQNPolicy, PTBPolicy

beta = 0.7
hp = Hyperparams(episodes=5000)
result = train(lambda: BearingsOnlyEnv(reward_params=RewardParams(beta)), hp, seed=0,
               progress=lambda ep, row: ep % 1000 == 0 and print(row))

###############################################################################
# Compare against the perpendicular rule on held-out seeds
comp = compare({"dqn": DQNPolicy(result.net, beta), "ptb": PTBPolicy()},
               EvalConfig(episodes=300, base_seed=10**6), betas={"ptb": beta})
print(comp.to_text())

actions = [r.action for r in comp.records["dqn"]]
print("greedy action histogram:", np.bincount(actions, minlength=17)[1:])
