"""beamfuse: log-linear fusion beam decoding with a randomized Mel front-end.

Subpackages:
  features  waveform to (optionally perturbed) Mel features
  speaker   GMM background model, total-variability subspace, i-vectors
  scorers   next-token scorer interface, n-gram and table models, smoothing
  fusion    beam-search decoder combining scorers with coverage and length terms
  harness   exactly solvable synthetic tasks, AdamW, toy LM training
"""

__version__ = "0.1.0"
