"""Independent reference computations used by several test modules."""

import numpy as np
import torch

from chaform.corpus import bundled_corpus, to_examples
from chaform.model import ModelConfig, Vocab, build_model, compute_loss, encode_batch


def small_setup(kind="double", n=6, dtype="float64", seed=0, **overrides):
    examples = to_examples(bundled_corpus(), kind)[:n]
    vocab = Vocab.build([e.source for e in examples], [e.form for e in examples])
    cfg = dict(vocab_size=len(vocab), d_model=32, n_layers=2, n_heads=4, ffn_dim=64,
               cha_kind=kind, dtype=dtype)
    cfg.update(overrides)
    config = ModelConfig(**cfg)
    model = build_model(config, seed)
    batch = encode_batch(examples, vocab, config.mask_variant)
    return model, vocab, examples, batch


def wake_zero_blocks(model, seed=1, scale=0.3):
    """Give zero-initialized output layers random values so every path carries gradient."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "ffn2" in name or name.endswith("encoder.fc2.weight") or name.endswith("encoder.fc2.bias"):
                p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * scale)


def group_of(name):
    if name.startswith(("tok_emb", "pos_emb")):
        return "embeddings"
    if ".adapter." in name:
        return "adapter"
    if name.startswith(("coref_encoder", "struct_encoder")):
        return "pointer"
    if name.startswith("enc_layers"):
        return "encoder"
    return "decoder"


def finite_difference_check(model, batch, eps=1e-6, per_tensor=4, seed=0):
    """Relative error between central differences and backprop, per parameter group.

    Each tensor contributes ``per_tensor`` coordinates, preferring the largest
    analytic gradients so that near-zero entries do not dominate.
    """
    model.zero_grad()
    compute_loss(model, batch).total.backward()
    rng = np.random.default_rng(seed)
    fd, an = {}, {}
    for name, p in model.named_parameters():
        g = p.grad.detach().reshape(-1).clone()
        top = torch.argsort(g.abs(), descending=True)[: per_tensor // 2].tolist()
        rand = rng.choice(g.numel(), size=min(per_tensor - len(top), g.numel()), replace=False).tolist()
        flat = p.data.view(-1)
        for k in dict.fromkeys(top + rand):
            old = flat[k].item()
            with torch.no_grad():
                flat[k] = old + eps
                up = compute_loss(model, batch).total.item()
                flat[k] = old - eps
                down = compute_loss(model, batch).total.item()
                flat[k] = old
            grp = group_of(name)
            fd.setdefault(grp, []).append((up - down) / (2 * eps))
            an.setdefault(grp, []).append(g[k].item())
    errors = {}
    for grp in fd:
        a, b = np.array(fd[grp]), np.array(an[grp])
        denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-30)
        errors[grp] = (float(np.linalg.norm(a - b) / denom), float(np.linalg.norm(b)))
    return errors


def prefix_average(x):
    """Row i = mean of rows 0..i."""
    return np.cumsum(x, axis=0) / np.arange(1, len(x) + 1)[:, None]
