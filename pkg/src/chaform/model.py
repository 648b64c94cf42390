"""Toy encoder-decoder transformer with CHA adapters and a pointer net."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .cha_mask import MaskVariant, build_mask
from .target_forms import (CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, OPEN, REDUCE, FormKind,
                           TargetForm)

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID = 0


class ConfigError(ValueError):
    pass


class Placement(str, enum.Enum):
    PARALLEL = "parallel"
    PIPELINE = "pipeline"
    INPLACE = "inplace"
    NONE = "none"


@dataclass
class ModelConfig:
    vocab_size: int = 0
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: Optional[int] = None
    placement: str = "parallel"
    adapter_dim: Optional[int] = None
    adapter_heads: int = 4
    inplace_heads: int = 2
    pointer_heads: int = 4
    alpha: float = 0.075
    cha_kind: str = "double"
    # one of compose_as_expand, expand_as_causal (single forms only) or causal
    ablation: Optional[str] = None
    max_positions: int = 256
    dtype: str = "float32"

    def __post_init__(self):
        self.placement = Placement(self.placement).value
        self.cha_kind = FormKind(self.cha_kind).value
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model
        if self.adapter_dim is None:
            self.adapter_dim = self.d_model // 2

    def validate(self) -> "ModelConfig":
        if self.vocab_size <= len(SPECIALS):
            raise ConfigError("vocab_size must exceed the number of special tokens")
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")
        if not 1 <= self.pointer_heads <= self.n_heads:
            raise ConfigError("pointer_heads must be in [1, n_heads]")
        if not 0 <= self.inplace_heads <= self.n_heads:
            raise ConfigError("inplace_heads must be in [0, n_heads]")
        if self.placement == Placement.INPLACE.value and self.pointer_heads + self.inplace_heads > self.n_heads:
            raise ConfigError("pointer heads and inplace CHA heads must not overlap")
        if self.placement in (Placement.PARALLEL.value, Placement.PIPELINE.value):
            if self.adapter_dim % self.adapter_heads:
                raise ConfigError("adapter_dim must be divisible by adapter_heads")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.ablation is not None:
            MaskVariant(self.ablation)
            if self.ablation in ("compose_as_expand", "expand_as_causal") and self.cha_kind != "single":
                raise ConfigError(f"ablation {self.ablation} applies to single forms only")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        return self

    @property
    def mask_variant(self) -> MaskVariant:
        return MaskVariant(self.ablation) if self.ablation else MaskVariant.for_kind(self.cha_kind)

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    @classmethod
    def from_dict(cls, d: Dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> Dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# vocabulary and batching


class Vocab:
    """Whole-token vocabulary shared by source and target sides."""

    def __init__(self, tokens: Iterable[str] = (), target_tokens: Iterable[str] = ()):
        self.itos: List[str] = list(SPECIALS)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)
        self.target_tokens: List[str] = []
        for t in target_tokens:
            self.add(t)
            if t not in self.target_tokens:
                self.target_tokens.append(t)

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def __len__(self) -> int:
        return len(self.itos)

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, self.stoi[UNK])

    @classmethod
    def build(cls, sources: Iterable[Sequence[str]], forms: Iterable[TargetForm]) -> "Vocab":
        targets: List[str] = []
        seen = set()
        for f in forms:
            for t in f.tokens:
                if t not in seen:
                    seen.add(t)
                    targets.append(t)
        for t in (OPEN, CLOSE, CLOSE_COMPOSE, CLOSE_EXPAND, REDUCE):
            if t not in seen:
                targets.append(t)
        src: List[str] = [t for s in sources for t in s]
        return cls(sorted(set(src)), targets)

    def to_dict(self) -> Dict:
        return {"itos": self.itos, "target_tokens": self.target_tokens}

    @classmethod
    def from_dict(cls, d: Dict) -> "Vocab":
        v = cls()
        for t in d["itos"]:
            v.add(t)
        v.target_tokens = list(d["target_tokens"])
        return v


@dataclass
class Example:
    source: Tuple[str, ...]
    form: TargetForm

    def __post_init__(self):
        self.source = tuple(self.source)


@dataclass
class Batch:
    src: torch.Tensor          # (B, S) source ids
    src_pad: torch.Tensor      # (B, S) True on padding
    dec_in: torch.Tensor       # (B, T) <bos> + form tokens
    dec_out: torch.Tensor      # (B, T) form tokens + <eos>
    tgt_pad: torch.Tensor      # (B, T)
    coref_in: torch.Tensor     # (B, T) key position of the pointed token, -1 if none
    struct_in: torch.Tensor
    coref_tgt: torch.Tensor    # (B, T) pointer target at each output position, -1 if none
    struct_tgt: torch.Tensor
    cha: torch.Tensor          # (B, T, T) decoder CHA visibility

    @property
    def size(self) -> int:
        return self.src.shape[0]


def decoder_cha_rows(form_rows: np.ndarray) -> np.ndarray:
    """Lift an ``N x N`` form mask to decoder input positions (``<bos>`` + form).

    ``<bos>`` sits at position 0 and stays visible to every row.
    """
    n = form_rows.shape[0]
    out = np.zeros((n + 1, n + 1), dtype=bool)
    out[:, 0] = True
    out[1:, 1:] = form_rows
    return out


def encode_batch(examples: Sequence[Example], vocab: Vocab, variant) -> Batch:
    variant = MaskVariant(variant)
    b = len(examples)
    s_len = max(len(e.source) for e in examples) + 1
    t_len = max(len(e.form) for e in examples) + 1
    src = torch.full((b, s_len), vocab.stoi[PAD], dtype=torch.long)
    dec_in = torch.full((b, t_len), vocab.stoi[PAD], dtype=torch.long)
    dec_out = torch.full((b, t_len), vocab.stoi[PAD], dtype=torch.long)
    ptr = {k: torch.full((b, t_len), -1, dtype=torch.long)
           for k in ("coref_in", "struct_in", "coref_tgt", "struct_tgt")}
    cha = torch.zeros((b, t_len, t_len), dtype=torch.bool)
    cha[:] = torch.eye(t_len, dtype=torch.bool)
    for r, ex in enumerate(examples):
        ids = [vocab.id(t) for t in ex.source] + [vocab.stoi[EOS]]
        src[r, : len(ids)] = torch.tensor(ids)
        toks = [vocab.id(t) for t in ex.form.tokens]
        n = len(toks)
        dec_in[r, : n + 1] = torch.tensor([vocab.stoi[BOS]] + toks)
        dec_out[r, : n + 1] = torch.tensor(toks + [vocab.stoi[EOS]])
        layers = [("coref", ex.form.coref)]
        if ex.form.struct is not None:
            layers.append(("struct", ex.form.struct))
        for name, layer in layers:
            for i, j in enumerate(layer):
                if j is not None:
                    ptr[f"{name}_in"][r, i + 1] = j + 1
                    ptr[f"{name}_tgt"][r, i] = j + 1
        form_mask = build_mask(ex.form.tokens, variant, ex.form.struct).visible
        cha[r, : n + 1, : n + 1] = torch.from_numpy(decoder_cha_rows(form_mask))
    return Batch(src, src == vocab.stoi[PAD], dec_in, dec_out, dec_out == vocab.stoi[PAD],
                 ptr["coref_in"], ptr["struct_in"], ptr["coref_tgt"], ptr["struct_tgt"], cha)


# ---------------------------------------------------------------------------
# layers


def attend(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, heads: int,
           visible: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Multi-head scaled dot-product attention.

    ``visible`` broadcasts to ``(B, heads, T, S)``; every row needs one visible
    column. Returns the merged output and the attention probabilities.
    """
    b, t, d = q.shape
    s = k.shape[1]
    dh = d // heads
    qh = q.view(b, t, heads, dh).transpose(1, 2)
    kh = k.view(b, s, heads, dh).transpose(1, 2)
    vh = v.view(b, s, heads, dh).transpose(1, 2)
    scores = qh @ kh.transpose(-1, -2) / math.sqrt(dh)
    scores = scores.masked_fill(~visible, float("-inf"))
    probs = torch.softmax(scores, dim=-1)
    out = (probs @ vh).transpose(1, 2).reshape(b, t, d)
    return out, probs


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)

    def forward(self, x, memory, visible):
        out, probs = attend(self.q(x), self.k(memory), self.v(memory), self.heads, visible)
        return self.o(out), probs


class ChaAdapter(nn.Module):
    """Bottleneck attention block: down-project, CHA-masked attention, normalize, up-project.

    The up-projection starts at zero so a fresh adapter adds nothing.
    """

    def __init__(self, d: int, d_a: int, heads: int):
        super().__init__()
        self.heads = heads
        self.ffn1 = nn.Linear(d, d_a)
        self.wq = nn.Linear(d_a, d_a, bias=False)
        self.wk = nn.Linear(d_a, d_a, bias=False)
        self.wv = nn.Linear(d_a, d_a, bias=False)
        self.norm = nn.LayerNorm(d_a)
        self.ffn2 = nn.Linear(d_a, d)
        nn.init.zeros_(self.ffn2.weight)
        nn.init.zeros_(self.ffn2.bias)

    def forward(self, h: torch.Tensor, cha: torch.Tensor) -> torch.Tensor:
        x1 = self.ffn1(h)
        x2, _ = attend(self.wq(x1), self.wk(x1), self.wv(x1), self.heads, cha.unsqueeze(1))
        return self.ffn2(self.norm(x1 + x2))


class FeedForward(nn.Module):
    def __init__(self, d: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(d, hidden)
        self.fc2 = nn.Linear(hidden, d)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim)
        self.ln2 = nn.LayerNorm(cfg.d_model)

    def forward(self, x, visible):
        a, _ = self.attn(x, x, visible)
        x = self.ln1(x + a)
        return self.ln2(x + self.ffn(x))


class DecoderLayer(nn.Module):
    """Post-norm decoder layer; ``placement`` decides where CHA enters."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.placement = Placement(cfg.placement)
        self.n_heads = cfg.n_heads
        self.inplace_heads = cfg.inplace_heads if self.placement is Placement.INPLACE else 0
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.adapter = None
        if self.placement in (Placement.PARALLEL, Placement.PIPELINE):
            self.adapter = ChaAdapter(cfg.d_model, cfg.adapter_dim, cfg.adapter_heads)
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim)
        self.ln3 = nn.LayerNorm(cfg.d_model)

    def self_attention_mask(self, causal: torch.Tensor, cha: torch.Tensor) -> torch.Tensor:
        if self.inplace_heads == 0:
            return causal.unsqueeze(1)
        # the last `inplace_heads` heads see the CHA mask instead of the causal one
        per_head = [causal] * (self.n_heads - self.inplace_heads) + [cha] * self.inplace_heads
        return torch.stack(per_head, dim=1)

    def forward(self, h, enc, enc_visible, causal, cha):
        a, probs = self.self_attn(h, h, self.self_attention_mask(causal, cha))
        if self.placement is Placement.PARALLEL:
            a = a + self.adapter(h, cha)
        elif self.placement is Placement.PIPELINE:
            a = a + self.adapter(a, cha)
        h = self.ln1(h + a)
        c, _ = self.cross_attn(h, enc, enc_visible)
        h = self.ln2(h + c)
        return self.ln3(h + self.ffn(h)), probs


class PointerEncoder(nn.Module):
    """Embeds a backward pointer from the pointed token's token and position embeddings.

    The two embeddings are concatenated and projected; the output layer starts
    at zero and rows without a pointer (index -1) always get the zero vector.
    """

    def __init__(self, d: int):
        super().__init__()
        self.fc1 = nn.Linear(2 * d, d)
        self.fc2 = nn.Linear(d, d)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, tok_emb: torch.Tensor, pos_emb: torch.Tensor, pointers: torch.Tensor) -> torch.Tensor:
        has = pointers >= 0
        idx = pointers.clamp_min(0)
        pointed_tok = torch.gather(tok_emb, 1, idx.unsqueeze(-1).expand_as(tok_emb))
        pointed_pos = pos_emb[idx]
        out = self.fc2(F.gelu(self.fc1(torch.cat([pointed_tok, pointed_pos], dim=-1))))
        return out * has.unsqueeze(-1).to(out.dtype)


@dataclass
class DecoderOutput:
    logits: torch.Tensor           # (B, T, V)
    coref_logp: torch.Tensor       # (B, T, T) log pointer probabilities over key positions
    struct_logp: torch.Tensor
    attention: List[torch.Tensor] = field(default_factory=list)


def pointer_probs(attention: torch.Tensor, heads: Sequence[int]) -> torch.Tensor:
    """Average the attention distributions of the designated heads: (B, H, T, S) -> (B, T, S)."""
    return attention[:, list(heads)].mean(dim=1)


def _safe_log(p: torch.Tensor) -> torch.Tensor:
    # masked keys have probability exactly 0; clamping keeps their backward pass finite
    return torch.log(p.clamp_min(torch.finfo(p.dtype).tiny))


class ChaParser(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.d_model
        self.tok_emb = nn.Embedding(config.vocab_size, d)
        self.pos_emb = nn.Embedding(config.max_positions, d)
        nn.init.normal_(self.tok_emb.weight, std=d ** -0.5)
        nn.init.normal_(self.pos_emb.weight, std=d ** -0.5)
        self.enc_layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.n_layers))
        self.dec_layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.n_layers))
        self.coref_encoder = PointerEncoder(d)
        self.struct_encoder = PointerEncoder(d)
        self.pointer_head_ids = tuple(range(config.pointer_heads))
        self.coref_layer = config.n_layers - 1
        self.struct_layer = max(config.n_layers - 2, 0)
        self.to(config.torch_dtype)

    def encode(self, src: torch.Tensor, src_pad: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(src.shape[1])
        x = self.tok_emb(src) + self.pos_emb(pos)
        visible = (~src_pad)[:, None, None, :]
        for layer in self.enc_layers:
            x = layer(x, visible)
        return x

    def embed_inputs(self, tokens: torch.Tensor, coref_in: torch.Tensor,
                     struct_in: Optional[torch.Tensor] = None) -> torch.Tensor:
        t = tokens.shape[1]
        positions = torch.arange(t)
        for name, ptr in (("coref", coref_in), ("struct", struct_in)):
            if ptr is not None and (ptr >= positions).any():
                raise IndexError(f"{name} pointer does not point to an earlier position")
        tok = self.tok_emb(tokens)
        pos_table = self.pos_emb.weight
        h = tok + pos_table[:t]
        h = h + self.coref_encoder(tok, pos_table, coref_in)
        if struct_in is not None:
            h = h + self.struct_encoder(tok, pos_table, struct_in)
        return h

    def decode(self, dec_in, coref_in, struct_in, cha, enc, src_pad) -> DecoderOutput:
        t = dec_in.shape[1]
        h = self.embed_inputs(dec_in, coref_in, struct_in)
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool)).expand(dec_in.shape[0], t, t)
        enc_visible = (~src_pad)[:, None, None, :]
        attention = []
        for layer in self.dec_layers:
            h, probs = layer(h, enc, enc_visible, causal, cha)
            attention.append(probs)
        logits = h @ self.tok_emb.weight.T
        heads = self.pointer_head_ids
        coref = _safe_log(pointer_probs(attention[self.coref_layer], heads))
        struct = _safe_log(pointer_probs(attention[self.struct_layer], heads))
        return DecoderOutput(logits, coref, struct, attention)

    def forward(self, batch: Batch) -> DecoderOutput:
        enc = self.encode(batch.src, batch.src_pad)
        return self.decode(batch.dec_in, batch.coref_in, batch.struct_in, batch.cha, enc, batch.src_pad)


# ---------------------------------------------------------------------------
# loss


@dataclass
class LossBreakdown:
    seq2seq: torch.Tensor
    pointer: torch.Tensor
    total: torch.Tensor
    n_pointers: int = 0


def pointer_loss(out: DecoderOutput, batch: Batch) -> Tuple[torch.Tensor, int]:
    """Mean pointer cross-entropy over positions that carry a pointer; 0 when there are none."""
    terms = []
    for logp, tgt in ((out.coref_logp, batch.coref_tgt), (out.struct_logp, batch.struct_tgt)):
        where = tgt >= 0
        if where.any():
            picked = torch.gather(logp, 2, tgt.clamp_min(0).unsqueeze(-1)).squeeze(-1)
            terms.append(-picked[where])
    if not terms:
        return torch.zeros((), dtype=out.logits.dtype), 0
    flat = torch.cat(terms)
    return flat.mean(), flat.numel()


def compute_loss(model: ChaParser, batch: Batch, out: Optional[DecoderOutput] = None) -> LossBreakdown:
    out = model(batch) if out is None else out
    v = out.logits.shape[-1]
    seq = F.cross_entropy(out.logits.reshape(-1, v), batch.dec_out.reshape(-1), ignore_index=PAD_ID)
    ptr, n = pointer_loss(out, batch)
    return LossBreakdown(seq, ptr, seq + model.config.alpha * ptr, n)


def per_example_losses(model: ChaParser, batch: Batch) -> torch.Tensor:
    """Token-summed seq2seq loss per example, for order-invariance checks."""
    out = model(batch)
    ce = F.cross_entropy(out.logits.transpose(1, 2), batch.dec_out, reduction="none")
    return (ce * (~batch.tgt_pad)).sum(dim=1)


@torch.no_grad()
def token_accuracy(model: ChaParser, batch: Batch) -> float:
    out = model(batch)
    pred = out.logits.argmax(-1)
    keep = ~batch.tgt_pad
    return float((pred[keep] == batch.dec_out[keep]).float().mean())


# ---------------------------------------------------------------------------
# training


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    steps: int = 3000
    lr: float = 1e-3
    warmup: int = 100
    weight_decay: float = 0.01
    batch_size: int = 64
    seed: int = 0
    clip: float = 1.0
    # stop early once teacher-forced accuracy reaches this value (checked every `check_every` steps)
    target_accuracy: Optional[float] = None
    check_every: int = 50


@dataclass
class TraceRow:
    step: int
    seq2seq: float
    pointer: float
    total: float


def lr_factor(step: int, warmup: int, total: int) -> float:
    """Linear warmup then cosine decay to zero."""
    if warmup > 0 and step < warmup:
        return (step + 1) / warmup
    span = max(total - warmup, 1)
    progress = min((step - warmup) / span, 1.0)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def build_model(config: ModelConfig, seed: int) -> ChaParser:
    torch.manual_seed(seed)
    return ChaParser(config)


def train(config: ModelConfig, examples: Sequence[Example], vocab: Vocab,
          tc: TrainConfig = TrainConfig(), model: Optional[ChaParser] = None,
          callback=None) -> Tuple[ChaParser, List[TraceRow]]:
    """Teacher-forced training with AdamW; deterministic for a fixed seed.

    ``callback`` receives each TraceRow and may return True to stop early.
    """
    if not examples:
        raise ValueError("empty training corpus")
    model = build_model(config, tc.seed) if model is None else model
    variant = config.mask_variant
    gen = torch.Generator().manual_seed(tc.seed)
    trace: List[TraceRow] = []
    if tc.steps == 0:
        return model, trace
    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: lr_factor(s, tc.warmup, tc.steps))
    bs = min(tc.batch_size, len(examples))
    full = encode_batch(examples, vocab, variant) if bs == len(examples) else None
    order: List[int] = []
    model.train()
    for step in range(tc.steps):
        if full is not None:
            batch = full
        else:
            if len(order) < bs:
                order += torch.randperm(len(examples), generator=gen).tolist()
            idx, order = order[:bs], order[bs:]
            batch = encode_batch([examples[i] for i in idx], vocab, variant)
        loss = compute_loss(model, batch)
        value = loss.total.item()
        if not math.isfinite(value):
            raise TrainingDiverged(step, value)
        opt.zero_grad()
        loss.total.backward()
        if tc.clip:
            nn.utils.clip_grad_norm_(model.parameters(), tc.clip)
        opt.step()
        sched.step()
        trace.append(TraceRow(step, loss.seq2seq.item(), loss.pointer.item(), value))
        if callback is not None and callback(trace[-1]):
            break
        if tc.target_accuracy is not None and (step + 1) % tc.check_every == 0:
            probe = full if full is not None else encode_batch(examples, vocab, variant)
            if token_accuracy(model, probe) >= tc.target_accuracy:
                break
    model.eval()
    return model, trace


def write_trace(path, trace: Sequence[TraceRow]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "seq2seq", "pointer", "total"])
        for r in trace:
            w.writerow([r.step, f"{r.seq2seq:.8g}", f"{r.pointer:.8g}", f"{r.total:.8g}"])


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "chaform-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: ChaParser, vocab: Vocab) -> None:
    torch.save({"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "config": model.config.to_dict(), "vocab": vocab.to_dict(),
                "state": model.state_dict()}, path)


def load_checkpoint(path) -> Tuple[ChaParser, Vocab]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if blob["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {blob['version']}")
    model = ChaParser(ModelConfig.from_dict(blob["config"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, Vocab.from_dict(blob["vocab"])
