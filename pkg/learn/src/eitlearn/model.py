"""Small image-to-image networks for learned post-processing.

A three-level residual U-Net (~0.5M parameters at the default width) maps
an initial 64 x 64 reconstruction to a refined one; the FC-UNet variant
prepends a linear lift from the flattened difference voltages to the image
grid. Everything runs in float64 so the least-squares lift initialization
is preserved to machine precision.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn


def _block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class ResidualUNet(nn.Module):
    """Encoder-decoder with skip connections and a global residual add."""

    def __init__(self, width: int = 32):
        super().__init__()
        w = width
        self.enc1 = _block(1, w)
        self.enc2 = _block(w, 2 * w)
        self.enc3 = _block(2 * w, 4 * w)
        self.pool = nn.MaxPool2d(2)
        self.up2 = nn.ConvTranspose2d(4 * w, 2 * w, 2, stride=2)
        self.dec2 = _block(4 * w, 2 * w)
        self.up1 = nn.ConvTranspose2d(2 * w, w, 2, stride=2)
        self.dec1 = _block(2 * w, w)
        self.head = nn.Conv2d(w, 1, 1)

    def forward(self, x):
        x = x.to(self.head.weight.dtype)
        # the conv stack sees the deviation from the unit background, which
        # keeps the ReLU features centered and the identity easy to escape
        e1 = self.enc1(x - 1.0)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        d2 = self.dec2(torch.cat([self.up2(e3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return x + self.head(d1)


class FCUNet(nn.Module):
    """Linear lift from difference voltages to the grid, then the U-Net.

    The lift carries no activation (the ReLU after the fully connected
    layer is dropped); its weights are meant to be initialized with the
    regularized least-squares solution via `init_lift_least_squares`.
    """

    def __init__(self, n_inputs: int, grid: int = 64, width: int = 32):
        super().__init__()
        self.grid = grid
        self.lift = nn.Linear(n_inputs, grid * grid)
        self.unet = ResidualUNet(width)

    def lifted(self, v):
        v = v.to(self.lift.weight.dtype)
        return self.lift(v).reshape(-1, 1, self.grid, self.grid)

    def forward(self, v):
        return self.unet(self.lifted(v))


def init_lift_least_squares(model: FCUNet, inputs: np.ndarray,
                            targets: np.ndarray, reg: float = 1e-3) -> None:
    """Set the lift weights to the Tikhonov-regularized least-squares map.

    Solves min_W sum_i ||W v_i + b - s_i||^2 + lam ||W||_F^2 with the
    inputs centered (the bias absorbs the means); lam = reg * trace(V V^T)
    / n_inputs. Computed in float64.
    """
    V = np.asarray(inputs, dtype=np.float64)          # (N, n_in)
    S = np.asarray(targets, dtype=np.float64).reshape(len(V), -1)  # (N, n_out)
    v_mean = V.mean(axis=0)
    s_mean = S.mean(axis=0)
    Vc = V - v_mean
    Sc = S - s_mean
    G = Vc.T @ Vc
    lam = reg * np.trace(G) / G.shape[0]
    W = np.linalg.solve(G + lam * np.eye(G.shape[0]), Vc.T @ Sc).T
    b = s_mean - W @ v_mean
    with torch.no_grad():
        model.lift.weight.copy_(torch.from_numpy(W))
        model.lift.bias.copy_(torch.from_numpy(b))


def least_squares_map(inputs: np.ndarray, targets: np.ndarray,
                      reg: float = 1e-3):
    """The same regularized least-squares solution as a (W, b) pair."""
    V = np.asarray(inputs, dtype=np.float64)
    S = np.asarray(targets, dtype=np.float64).reshape(len(V), -1)
    v_mean = V.mean(axis=0)
    s_mean = S.mean(axis=0)
    Vc = V - v_mean
    Sc = S - s_mean
    G = Vc.T @ Vc
    lam = reg * np.trace(G) / G.shape[0]
    W = np.linalg.solve(G + lam * np.eye(G.shape[0]), Vc.T @ Sc).T
    b = s_mean - W @ v_mean
    return W, b


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
