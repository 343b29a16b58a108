"""
MCP Wasserstein Lab Package

This package implements exact and approximate Wasserstein-1 estimators, geometric
k-medians clustering and small-scale (W)GAN training dynamics, together with the
Monte Carlo protocols showing how far WGAN losses sit from the Wasserstein distance
they are meant to estimate.

Main components:
- measures.py: Empirical measures, synthetic samplers, CSV ingestion, mean batches
- exact_ot.py: Transportation LP, assignment and brute-force W1 solvers
- entropic_ot.py: Sinkhorn costs, the Sinkhorn divergence and its point gradients
- clustering.py: Weiszfeld geometric medians, geometric k-medians, projection measures
- nn.py: Small MLP engine with reverse-mode and double-backprop gradients, Adam
- gan_lab.py: WGAN-GP, clipping, c-transform, NS-GAN and minibatch-Sinkhorn training
- experiments.py: Seed-stamped experimental protocols and log-log extrapolation
- persistence.py: CSV results, JSON manifests, SVG plots and network checkpoints
- cli.py: Command-line surface binding all of the above
- server.py: MCP tool server exposing the desk-scale estimators
"""

__version__ = "0.1.0"

# MCP Wasserstein Lab
