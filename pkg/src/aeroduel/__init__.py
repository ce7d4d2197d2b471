"""Adversarial reinforcement learning for robust fixed-wing path following.

A 6DOF simulator of a small fixed-wing UAS (Carbon-Z Cessna 150T class
airframe), reference-path generation from trim primitives, a two-agent
training environment in which a protagonist tracks the path while an
adversary perturbs the aerodynamic coefficients, a from-scratch PPO
implementation with an alternating two-player training loop, and an
evaluation harness producing path-error and control-effort metrics.
"""

__version__ = "0.1.0"
