"""Bearings-only target tracking with learned observer manoeuvres.

Modules: ``models`` (kinematics and scenarios), ``ckf`` (cubature Kalman
filter), ``env`` (single-turn episode environment), ``policies`` (geometric
baselines and the DQN wrapper), ``dqn`` (numpy Q-network and training),
``evaluation`` (paired Monte Carlo harness) and ``cli``.
"""

__version__ = "0.1.0"
