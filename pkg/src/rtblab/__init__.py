"""Batch-RL laboratory for real-time bidding.

Learns a simulated ad market (generative bid-request sampler, censored
price model, click model) from auction logs and trains/evaluates
budget-constrained bidding agents inside it.
"""

__version__ = "0.1.0"
