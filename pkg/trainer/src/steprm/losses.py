"""Step-reward losses over head pre-activations, with closed-form gradients.

Predictions are sigmoid-squashed pre-activations z. The regression loss is
(1/(2N)) * sum_i (r_i - sigmoid(z_i))^2 over the N step positions of one
sample; the baseline classification loss is the mean binary cross entropy
against hard targets. Closed-form gradients back both the finite-difference
checks and a reference for what the training graph computes.
"""

from __future__ import annotations

import numpy as np
import torch

CE_EPS = 1e-7


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_mse(z: np.ndarray, targets: np.ndarray) -> float:
    """(1/(2N)) * sum (r - sigmoid(z))^2."""
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    preds = sigmoid(z)
    return float(np.sum((targets - preds) ** 2) / (2 * len(z)))


def loss_mse_grad(z: np.ndarray, targets: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    preds = sigmoid(z)
    return (preds - targets) * preds * (1.0 - preds) / len(z)


def hard_targets(soft: np.ndarray) -> np.ndarray:
    """Round soft labels at 0.5; exact ties go to 0 (matching the labeler)."""
    soft = np.asarray(soft, dtype=np.float64)
    return (soft > 0.5).astype(np.float64)


def loss_ce(z: np.ndarray, targets: np.ndarray) -> float:
    """Mean BCE over steps against {0,1} targets, predictions clamped."""
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    preds = np.clip(sigmoid(z), CE_EPS, 1.0 - CE_EPS)
    return float(np.mean(-(targets * np.log(preds) + (1.0 - targets) * np.log(1.0 - preds))))


def loss_ce_grad(z: np.ndarray, targets: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    preds = sigmoid(z)
    inside = (preds > CE_EPS) & (preds < 1.0 - CE_EPS)
    return np.where(inside, preds - targets, 0.0) / len(z)


def central_difference_grad(fn, z: np.ndarray, h: float = 1e-5) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for i in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        grad[i] = (fn(zp) - fn(zm)) / (2 * h)
    return grad


# Torch counterparts used inside the training graph -------------------------


def torch_loss_mse(z: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-sample (1/(2N)) sum of squared errors; z and targets are 1-D."""
    preds = torch.sigmoid(z)
    return torch.sum((targets - preds) ** 2) / (2 * z.numel())


def torch_loss_ce(z: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    preds = torch.clamp(torch.sigmoid(z), CE_EPS, 1.0 - CE_EPS)
    return torch.mean(-(targets * torch.log(preds) + (1 - targets) * torch.log(1 - preds)))
