"""Spectral normalization by power iteration.

Weight matrices are reshaped to (out_features, -1); u/v live in module
buffers so the iteration state survives checkpointing. A weight whose top
singular value underflows the epsilon floor is returned unchanged, so an
exactly-zero layer is a fixed point rather than a NaN factory.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError

EPS = 1e-12

_PARAMETERIZED = (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)


def spectral_normalize(
    weight: torch.Tensor,
    u: torch.Tensor,
    v: torch.Tensor,
    n_iterations: int = 1,
    eps: float = EPS,
):
    """Divide `weight` by a power-iteration estimate of its top singular value.

    Returns (normalized_weight, u, v, sigma). The iteration itself runs
    detached; sigma keeps the graph so gradients flow through the division.
    """
    if n_iterations < 0:
        raise ConfigurationError("n_iterations must be >= 0")
    w = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        wd = w.detach()
        for _ in range(n_iterations):
            v = F.normalize(torch.mv(wd.t(), u), dim=0, eps=eps)
            u = F.normalize(torch.mv(wd, v), dim=0, eps=eps)
    sigma = torch.dot(u, torch.mv(w, v))
    return weight / sigma.clamp(min=eps), u, v, sigma


class SpectralNorm(nn.Module):
    """Wraps a conv or linear layer; every training-mode forward runs one
    power iteration and applies the normalized weight."""

    def __init__(self, module: nn.Module, n_power_iterations: int = 1, eps: float = EPS):
        super().__init__()
        if not isinstance(module, _PARAMETERIZED):
            raise ConfigurationError(
                f"spectral norm supports conv/linear layers, got {type(module).__name__}"
            )
        if n_power_iterations < 1:
            raise ConfigurationError("n_power_iterations must be >= 1")
        self.module = module
        self.n_power_iterations = n_power_iterations
        self.eps = eps
        w = module.weight
        rows = w.shape[0]
        cols = w.reshape(rows, -1).shape[1]
        self.register_buffer(
            "weight_u", F.normalize(torch.randn(rows), dim=0, eps=eps)
        )
        self.register_buffer(
            "weight_v", F.normalize(torch.randn(cols), dim=0, eps=eps)
        )

    def normalized_weight(self) -> torch.Tensor:
        n_iter = self.n_power_iterations if self.training else 0
        w, u, v, _ = spectral_normalize(
            self.module.weight, self.weight_u, self.weight_v, n_iter, self.eps
        )
        if self.training:
            self.weight_u.copy_(u)
            self.weight_v.copy_(v)
        return w

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        w = self.normalized_weight()
        m = self.module
        if isinstance(m, nn.Conv2d):
            return F.conv2d(x, w, m.bias, m.stride, m.padding, m.dilation, m.groups)
        if isinstance(m, nn.ConvTranspose2d):
            return F.conv_transpose2d(
                x, w, m.bias, m.stride, m.padding, m.output_padding, m.groups, m.dilation
            )
        return F.linear(x, w, m.bias)


def sn_conv(*args, **kwargs) -> SpectralNorm:
    return SpectralNorm(nn.Conv2d(*args, **kwargs))


def spectral_norm_modules(net: nn.Module) -> list[SpectralNorm]:
    return [m for m in net.modules() if isinstance(m, SpectralNorm)]


def unwrapped_parameterized_layers(net: nn.Module) -> list[str]:
    """Names of conv/linear layers NOT under a SpectralNorm wrapper."""
    wrapped = {id(m.module) for m in net.modules() if isinstance(m, SpectralNorm)}
    return [
        name
        for name, m in net.named_modules()
        if isinstance(m, _PARAMETERIZED) and id(m) not in wrapped
    ]
