"""A tiny self-contained transformer whose linear layers get dumped.

No downloads: the model is randomly initialized under a fixed seed. Forward
pre-hooks on every ``nn.Linear`` capture the layer's input (after the
preceding normalization), which is exactly the activation the layer-wise
reconstruction objective is defined on.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn


class Block(nn.Module):
    def __init__(self, width: int, heads: int, ffn: int):
        super().__init__()
        if width % heads:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.heads = heads
        self.ln_attn = nn.LayerNorm(width)
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.o_proj = nn.Linear(width, width)
        self.ln_mlp = nn.LayerNorm(width)
        self.up_proj = nn.Linear(width, ffn)
        self.down_proj = nn.Linear(ffn, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln_attn(x)
        shape = (b, t, self.heads, d // self.heads)
        q = self.q_proj(h).view(shape).transpose(1, 2)
        k = self.k_proj(h).view(shape).transpose(1, 2)
        v = self.v_proj(h).view(shape).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(d // self.heads)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
        att = att.masked_fill(causal, float("-inf")).softmax(dim=-1)
        x = x + self.o_proj((att @ v).transpose(1, 2).reshape(b, t, d))
        x = x + self.down_proj(torch.nn.functional.gelu(self.up_proj(self.ln_mlp(x))))
        return x


class ToyTransformer(nn.Module):
    def __init__(self, vocab: int = 64, width: int = 32, blocks: int = 2, heads: int = 4, ffn: int = 64, max_seq: int = 128):
        super().__init__()
        self.tok = nn.Embedding(vocab, width)
        self.pos = nn.Embedding(max_seq, width)
        self.blocks = nn.ModuleList(Block(width, heads, ffn) for _ in range(blocks))
        self.ln_out = nn.LayerNorm(width)
        self.vocab = vocab
        self.max_seq = max_seq

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        t = tokens.shape[1]
        x = self.tok(tokens) + self.pos(torch.arange(t, device=tokens.device))[None]
        for block in self.blocks:
            x = block(x)
        return self.ln_out(x)


def capture_linear_layers(
    model: ToyTransformer, calib_tokens: torch.Tensor, heldout_tokens: torch.Tensor
) -> list[dict]:
    """Run both token batches and collect, per linear layer, its weight plus
    calibration and held-out input activations as (in_features x tokens)."""
    captured: dict[str, list[np.ndarray]] = {}
    handles = []

    def make_hook(name: str):
        def hook(module, inputs):
            x = inputs[0].detach().reshape(-1, module.in_features)
            captured[name].append(x.double().numpy().T.copy())

        return hook

    linears = [
        (name, module)
        for name, module in model.named_modules()
        if isinstance(module, nn.Linear)
    ]
    for name, module in linears:
        captured[name] = []
        handles.append(module.register_forward_pre_hook(make_hook(name)))

    model.eval()
    with torch.no_grad():
        model(calib_tokens)
        model(heldout_tokens)
    for handle in handles:
        handle.remove()

    layers = []
    for name, module in linears:
        calib, heldout = captured[name]
        layers.append(
            {
                "name": name.replace(".", "_"),
                "module_path": name,
                "weights": module.weight.detach().double().numpy(),
                "calibration": calib,
                "heldout": heldout,
            }
        )
    return layers
