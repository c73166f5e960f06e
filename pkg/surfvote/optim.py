"""Parameter updates: bias-corrected Adam and the learning-rate schedule."""
import logging
from collections import OrderedDict
from typing import Dict, Mapping

import numpy as np

logger = logging.getLogger(__name__)


def learning_rate(
    iteration: int,
    base: float,
    total: int,
    warmup: int = 0,
    alpha: float = 0.05,
) -> float:
    """Linear warm-up over ``warmup`` iterations, then cosine decay from ``base``
    down to ``alpha * base`` at ``total`` iterations."""
    if iteration < warmup:
        return base * iteration / warmup
    progress = (iteration - warmup) / max(total - warmup, 1)
    progress = min(progress, 1.0)
    factor = (np.cos(np.pi * progress) + 1.0) * 0.5 * (1.0 - alpha) + alpha
    return base * float(factor)


class Adam:
    """Adaptive-moment optimizer updating named arrays in place.

    Parameters
    ----------
    beta1, beta2
        Decay rates of the first and second moment estimates.

    eps
        Term added to the denominator.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = OrderedDict()  # type: Dict[str, np.ndarray]
        self.v = OrderedDict()  # type: Dict[str, np.ndarray]

    def step(
        self,
        params: Mapping[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        lr: float,
    ) -> bool:
        """Update ``params`` in place. Returns False, leaving parameters and
        moments untouched, if any gradient is not finite."""
        for name, grad in grads.items():
            if np.shape(grad) != np.shape(params[name]):
                raise ValueError(
                    "Gradient of {} has shape {}, expected {}.".format(
                        name, np.shape(grad), np.shape(params[name])
                    )
                )
            if not np.all(np.isfinite(grad)):
                logger.warning("Non-finite gradient for {}. Step skipped.".format(name))
                return False

        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for name, grad in grads.items():
            param = params[name]
            m = self.m.setdefault(name, np.zeros_like(param))
            v = self.v.setdefault(name, np.zeros_like(param))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(grad)
            update = lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param -= update.astype(param.dtype, copy=False)
        return True


def optimizer_step(params, grads, optimizer: Adam, lr: float) -> bool:
    return optimizer.step(params, grads, lr)
