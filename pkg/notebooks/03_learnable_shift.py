"""
The learnable shift
===================

Each channel moves along time, height and width by a real-valued offset.
Fractional offsets blend the two nearest integer shifts, so the offset gets
a gradient; positions shifted in from outside read zero.
"""

# %%
import torch

from intformer.shift import learnable_shift

x = torch.tensor([[[1.0, 2.0, 3.0, 4.0]]])  # (C=1, H=1, W=4)
for dx in (0.0, 0.5, 1.0, -1.0, 1.25):
    y = learnable_shift(x, torch.tensor([[0.0, 0.0, dx]]))
    print(f"w offset {dx:+.2f}: {y[0, 0].tolist()}")

# %%
# Offsets train by gradient descent. Recover a hidden shift of 1.3 pixels.
torch.manual_seed(0)
img = torch.randn(1, 8, 8)
target = learnable_shift(img, torch.tensor([[0.0, 0.0, 1.3]]))
off = torch.zeros(1, 3, requires_grad=True)
opt = torch.optim.Adam([off], lr=0.05)
for step in range(300):
    loss = ((learnable_shift(img, off) - target) ** 2).mean()
    opt.zero_grad()
    loss.backward()
    opt.step()
print("recovered offsets (t, h, w):", [round(v, 3) for v in off.detach()[0].tolist()])

# %%
# Time works the same way on (T, C, H, W) clips.
clip = torch.arange(4.0).view(4, 1, 1, 1).expand(4, 1, 2, 2).contiguous()
print(learnable_shift(clip, torch.tensor([[1.0, 0.0, 0.0]]))[:, 0, 0, 0].tolist())
