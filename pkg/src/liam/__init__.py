"""Language/image/action/map transcript model with contrastive pre-alignment.

Modules:

* :mod:`liam.autodiff` -- reverse-mode differentiation on numpy arrays
* :mod:`liam.encoders` -- text, frame, action and map encoders, frame-pair fusion
* :mod:`liam.contrastive` -- image/action and text/image alignment losses
* :mod:`liam.fusion` -- causal multimodal transformer and output heads
* :mod:`liam.losses` -- action, object and goal-progress objectives
* :mod:`liam.worldgen` -- synthetic gridworld episodes
* :mod:`liam.harness` -- training, evaluation, checkpoints and the ``liam`` CLI
"""

__version__ = "0.1.0"
