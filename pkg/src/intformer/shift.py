"""Learnable fractional shifts along time, height and width.

Each channel ``c`` carries three continuous offsets ``(dt, dh, dw)``. Along one axis a
shift by ``d = k + a`` (``k`` integer, ``0 <= a < 1``) is linear interpolation::

    out[i] = (1 - a) * x[i - k] + a * x[i - k - 1]

with zeros read outside the axis. The 3D shift is the composition of the three 1D
shifts, which equals trilinear interpolation. Gradients are derived by hand: with
respect to ``d`` it is ``x[i - k - 1] - x[i - k]``, with respect to ``x`` it is the
transposed interpolation (a scatter-add).
"""

from __future__ import annotations

import torch
from torch import nn


def _gather_shift(xp: torch.Tensor, k: torch.Tensor):
    """Values x[i - k] and x[i - k - 1] along the last axis, zero outside.

    ``xp`` has shape (..., C, L); ``k`` is an integer tensor of shape (C,).
    """
    L = xp.shape[-1]
    i = torch.arange(L, device=xp.device)
    src0 = i[None, :] - k[:, None]
    src1 = src0 - 1
    valid0 = (src0 >= 0) & (src0 < L)
    valid1 = (src1 >= 0) & (src1 < L)
    idx0 = src0.clamp(0, L - 1).expand(xp.shape)
    idx1 = src1.clamp(0, L - 1).expand(xp.shape)
    v0 = torch.gather(xp, -1, idx0) * valid0.to(xp.dtype)
    v1 = torch.gather(xp, -1, idx1) * valid1.to(xp.dtype)
    return v0, v1, (idx0, valid0), (idx1, valid1)


class _Shift1d(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, offset, dim):
        xp = x.movedim((2, dim), (-2, -1))
        k = torch.floor(offset.detach()).to(torch.long)
        a = (offset.detach() - k.to(offset.dtype)).to(x.dtype)[:, None]
        v0, v1, g0, g1 = _gather_shift(xp, k)
        out = (1 - a) * v0 + a * v1
        ctx.dim = dim
        ctx.save_for_backward(v0, v1, a, g0[0], g0[1], g1[0], g1[1])
        return out.movedim((-2, -1), (2, dim))

    @staticmethod
    def backward(ctx, grad_out):
        v0, v1, a, idx0, valid0, idx1, valid1 = ctx.saved_tensors
        dim = ctx.dim
        gp = grad_out.movedim((2, dim), (-2, -1))
        grad_x = grad_offset = None
        if ctx.needs_input_grad[0]:
            gx = torch.zeros_like(gp)
            gx.scatter_add_(-1, idx0, gp * (1 - a) * valid0.to(gp.dtype))
            gx.scatter_add_(-1, idx1, gp * a * valid1.to(gp.dtype))
            grad_x = gx.movedim((-2, -1), (2, dim))
        if ctx.needs_input_grad[1]:
            reduce = [d for d in range(gp.dim()) if d != gp.dim() - 2]
            grad_offset = (gp * (v1 - v0)).sum(dim=reduce)
        return grad_x, grad_offset, None


def learnable_shift(x: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
    """Shift each channel of ``x`` by its (dt, dh, dw) offsets.

    ``x`` is (C, H, W), (T, C, H, W) or (B, T, C, H, W); ``offsets`` is (C, 3).
    A 3-D input has a single time step, so any |dt| >= 1 zeroes that channel.
    """
    if offsets.dim() != 2 or offsets.shape[1] != 3:
        raise ValueError(f"offsets must have shape (C, 3), got {tuple(offsets.shape)}")
    if not torch.all(torch.isfinite(offsets)):
        raise ValueError("shift offsets must be finite")
    squeeze = x.dim()
    if squeeze == 3:
        x5 = x[None, None]
    elif squeeze == 4:
        x5 = x[None]
    elif squeeze == 5:
        x5 = x
    else:
        raise ValueError(f"expected a 3-, 4- or 5-D input, got {x.dim()}-D")
    if x5.shape[2] != offsets.shape[0]:
        raise ValueError(f"input has {x5.shape[2]} channels but offsets cover {offsets.shape[0]}")
    out = x5
    for axis, dim in enumerate((1, 3, 4)):
        out = _Shift1d.apply(out, offsets[:, axis], dim)
    if squeeze == 3:
        return out[0, 0]
    if squeeze == 4:
        return out[0]
    return out


class LearnableShift(nn.Module):
    """Per-channel (t, h, w) shift with trainable offsets, initialised U(-init_range, init_range)."""

    def __init__(self, channels: int, init_range: float = 0.5):
        super().__init__()
        self.offsets = nn.Parameter(torch.empty(channels, 3).uniform_(-init_range, init_range))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return learnable_shift(x, self.offsets)
