"""Grasp-guided whole-body mobile grasping, desk scale.

Pipeline: synthesize a labeled grasp dataset on primitive objects, train a
conditional VAE proposal generator, select a guidance grasp by envelopment
coverage, train a PPO whole-body policy against the simplified simulator,
and evaluate success rate / hand-object drift.
"""

__version__ = "0.1.0"
