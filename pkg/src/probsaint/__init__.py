"""Probabilistic used-car pricing toolchain.

Subpackages cover the full workflow: a float64 autodiff engine
(:mod:`probsaint.autodiff`), CSV feature pipeline (:mod:`probsaint.pipeline`),
attention-based probabilistic pricing models (:mod:`probsaint.model`),
training and checkpointing (:mod:`probsaint.training`,
:mod:`probsaint.checkpoint`), metrics (:mod:`probsaint.metrics`), a synthetic
market with a known generative oracle (:mod:`probsaint.market`),
offer-duration sweeps (:mod:`probsaint.forecast`), and a CLI plus HTTP
service (:mod:`probsaint.cli`, :mod:`probsaint.service`).
"""

__version__ = "0.1.0"
