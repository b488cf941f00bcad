"""
csattn

Continuous Scaling Attention: a numpy reverse-mode autodiff core, the CSAttn
block and its three-level restoration network, desk-scale training, cost
accounting and an ablation harness.
"""

__version__ = "0.1.0"
