"""Central finite differences, independent of autograd."""

import numpy as np
import torch


def central_diff(f, x: torch.Tensor, eps: float = 1e-6, index=None) -> np.ndarray:
    """d f / d x[i] for every flat index (or just those in ``index``); f returns a scalar."""
    x = x.detach().clone()
    flat = x.view(-1)
    idx = range(flat.numel()) if index is None else index
    out = []
    for i in idx:
        old = flat[i].item()
        flat[i] = old + eps
        hi = float(f(x))
        flat[i] = old - eps
        lo = float(f(x))
        flat[i] = old
        out.append((hi - lo) / (2 * eps))
    return np.array(out)


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def off_knot_offsets(rng: np.random.Generator, shape, lo=-2.5, hi=2.5, margin=0.05) -> torch.Tensor:
    """Random offsets whose fractional parts stay ``margin`` away from integers."""
    k = rng.integers(int(np.floor(lo)), int(np.ceil(hi)), size=shape)
    frac = rng.uniform(margin, 1 - margin, size=shape)
    return torch.tensor(k + frac, dtype=torch.float64)
