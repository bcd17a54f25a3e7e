"""Artifact-robust graph classification for tiled pathology-style images.

Pipeline: corruption synthesis -> patch graph construction -> GCN node
embeddings -> untrained-prior graph denoising -> top-k pooling ->
CLS-token graph transformer -> grade classification, plus an experiment
harness measuring accuracy/kappa degradation under perturbation with and
without the denoiser.
"""

__version__ = "0.1.0"
