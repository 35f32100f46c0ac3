"""Privacy-preserving residual networks via noise-injected residual mappings.

Library + CLI laboratory: noise-injected residual blocks (additive and
multiplicative strategies), a Renyi-DP accountant with closed-form noise
calibration, a shadow-model membership-inference harness, a DPSGD baseline,
closed-form Rademacher complexity evaluators with Monte-Carlo oracles, and
an ODE/SDE reversibility demonstrator.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    EnsembleModel,
    NoiseConfig,
    ResidualNet,
    TrainConfig,
    clip_away_from_zero,
    ensemble_predict,
    input_perturb,
    load_checkpoint,
    save_checkpoint,
    train,
)
