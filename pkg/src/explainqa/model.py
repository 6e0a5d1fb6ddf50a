"""Transformer language model and multiple-choice classifier, from scratch.

Both share one pre-norm transformer encoder stack built on the autograd
module; the LM applies a causal mask and a vocabulary projection, the
classifier attends bidirectionally, adds segment embeddings, and scores each
choice from the final state of the leading [CLS] token. All math is float64.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict

import numpy as np

from .autograd import (
    Tensor, embedding, gelu, layer_norm, log_softmax, no_grad, parameter,
    softmax,
)
from . import vocab as V

NEG_INF = -np.inf


@dataclass(frozen=True)
class LMConfig:
    """Architecture and initialization settings shared by LM and classifier."""

    n_layers: int
    n_heads: int
    d_model: int
    d_ff: int
    context_window: int
    vocab_size: int
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")


def desk_config(vocab_size: int, *, seed: int = 0, context_window: int = 128) -> LMConfig:
    """Default small configuration for from-scratch training at desk scale."""
    return LMConfig(
        n_layers=4, n_heads=4, d_model=128, d_ff=512,
        context_window=context_window, vocab_size=vocab_size, seed=seed,
    )


def tiny_config(vocab_size: int, *, seed: int = 0, context_window: int = 32) -> LMConfig:
    """Very small configuration for tests and gradient checks."""
    return LMConfig(
        n_layers=2, n_heads=2, d_model=16, d_ff=32,
        context_window=context_window, vocab_size=vocab_size, seed=seed,
    )


class Parameters:
    """Named collection of trainable tensors with a step counter."""

    def __init__(self, tensors: dict[str, Tensor], step: int = 0):
        self.tensors = tensors
        self.step = step

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.tensors.items()
        }

    def check_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"non-finite values in parameter {name!r}")

    def copy(self) -> "Parameters":
        return Parameters(
            {name: parameter(t.data.copy()) for name, t in self.tensors.items()},
            step=self.step,
        )


def _encoder_shapes(cfg: LMConfig) -> dict[str, tuple[int, ...]]:
    D, F = cfg.d_model, cfg.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb.w": (cfg.vocab_size, D),
        "pos_emb.w": (cfg.context_window, D),
    }
    for i in range(cfg.n_layers):
        h = f"h{i}"
        shapes.update({
            f"{h}.ln1.g": (D,), f"{h}.ln1.b": (D,),
            f"{h}.attn.qkv.w": (D, 3 * D), f"{h}.attn.qkv.b": (3 * D,),
            f"{h}.attn.out.w": (D, D), f"{h}.attn.out.b": (D,),
            f"{h}.ln2.g": (D,), f"{h}.ln2.b": (D,),
            f"{h}.ff.in.w": (D, F), f"{h}.ff.in.b": (F,),
            f"{h}.ff.out.w": (F, D), f"{h}.ff.out.b": (D,),
        })
    shapes["ln_f.g"] = (D,)
    shapes["ln_f.b"] = (D,)
    return shapes


def lm_param_shapes(cfg: LMConfig) -> dict[str, tuple[int, ...]]:
    shapes = _encoder_shapes(cfg)
    shapes["lm_head.w"] = (cfg.d_model, cfg.vocab_size)
    shapes["lm_head.b"] = (cfg.vocab_size,)
    return shapes


def classifier_param_shapes(cfg: LMConfig) -> dict[str, tuple[int, ...]]:
    shapes = _encoder_shapes(cfg)
    shapes["seg_emb.w"] = (2, cfg.d_model)
    shapes["cls_head.w"] = (cfg.d_model, 1)
    shapes["cls_head.b"] = (1,)
    return shapes


def _init(shapes: dict[str, tuple[int, ...]], seed: int) -> Parameters:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in shapes.items():
        if name.endswith(".g"):
            data = np.ones(shape)
        elif name.endswith(".b"):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        tensors[name] = parameter(data)
    return Parameters(tensors)


def init_lm_params(cfg: LMConfig) -> Parameters:
    return _init(lm_param_shapes(cfg), cfg.seed)


def init_classifier_params(cfg: LMConfig) -> Parameters:
    return _init(classifier_param_shapes(cfg), cfg.seed)


def encode_stack(
    params: Parameters,
    cfg: LMConfig,
    ids: np.ndarray,
    *,
    causal: bool,
    segments: np.ndarray | None = None,
    pad_mask: np.ndarray | None = None,
    dropout_rng: np.random.Generator | None = None,
    attn_sink: list | None = None,
) -> Tensor:
    """Shared transformer stack: ids [B, T] to final states [B, T, d_model].

    pad_mask, when given, is a boolean [B, T] marking real (non-PAD) tokens;
    padded positions are excluded as attention keys. attn_sink, when given,
    collects each layer's attention weights as numpy arrays.
    """
    ids = np.asarray(ids, dtype=np.intp)
    B, T = ids.shape
    if T > cfg.context_window:
        raise ValueError(f"sequence length {T} exceeds context window "
                         f"{cfg.context_window}")
    D, H = cfg.d_model, cfg.n_heads
    dh = D // H
    scale = 1.0 / np.sqrt(dh)

    x = embedding(params["tok_emb.w"], ids) + embedding(
        params["pos_emb.w"], np.arange(T)
    )
    if segments is not None:
        x = x + embedding(params["seg_emb.w"], np.asarray(segments, dtype=np.intp))
    x = _dropout(x, cfg.dropout, dropout_rng)

    mask = np.zeros((1, 1, T, T))
    if causal:
        mask = mask + np.where(np.triu(np.ones((T, T)), k=1) > 0, NEG_INF, 0.0)
    if pad_mask is not None:
        key_mask = np.where(pad_mask[:, None, None, :], 0.0, NEG_INF)
        mask = mask + key_mask  # [B, 1, 1, T] broadcast over query positions

    for i in range(cfg.n_layers):
        h = f"h{i}"
        a = layer_norm(x, params[f"{h}.ln1.g"], params[f"{h}.ln1.b"])
        qkv = a @ params[f"{h}.attn.qkv.w"] + params[f"{h}.attn.qkv.b"]
        q = qkv[:, :, 0 * D : 1 * D].reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        k = qkv[:, :, 1 * D : 2 * D].reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        v = qkv[:, :, 2 * D : 3 * D].reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        scores = (q @ k.swapaxes(-1, -2)) * scale + mask
        weights = softmax(scores, axis=-1)
        if attn_sink is not None:
            attn_sink.append(weights.data.copy())
        weights = _dropout(weights, cfg.dropout, dropout_rng)
        ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
        attn_out = ctx @ params[f"{h}.attn.out.w"] + params[f"{h}.attn.out.b"]
        x = x + _dropout(attn_out, cfg.dropout, dropout_rng)

        m = layer_norm(x, params[f"{h}.ln2.g"], params[f"{h}.ln2.b"])
        ff = gelu(m @ params[f"{h}.ff.in.w"] + params[f"{h}.ff.in.b"])
        ff = ff @ params[f"{h}.ff.out.w"] + params[f"{h}.ff.out.b"]
        x = x + _dropout(ff, cfg.dropout, dropout_rng)

    return layer_norm(x, params["ln_f.g"], params["ln_f.b"])


def _dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * keep


def lm_logits(
    params: Parameters, cfg: LMConfig, ids: np.ndarray,
    dropout_rng: np.random.Generator | None = None,
    attn_sink: list | None = None,
) -> Tensor:
    """Batched next-token logits [B, T, vocab_size]."""
    x = encode_stack(params, cfg, ids, causal=True, dropout_rng=dropout_rng,
                     attn_sink=attn_sink)
    return x @ params["lm_head.w"] + params["lm_head.b"]


def lm_forward(params: Parameters, cfg: LMConfig, tokens: list[int]) -> np.ndarray:
    """Next-token logits [T, vocab_size] for one sequence, no dropout."""
    if len(tokens) > cfg.context_window:
        raise ValueError(
            f"sequence length {len(tokens)} exceeds context window "
            f"{cfg.context_window}"
        )
    ids = np.asarray([tokens], dtype=np.intp)
    with no_grad():
        return lm_logits(params, cfg, ids).data[0]


def lm_loss(
    params: Parameters, cfg: LMConfig,
    context_ids: list[int], explanation_ids: list[int],
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Mean negative log-likelihood of the explanation given the context.

    Context positions condition the prediction but contribute no loss terms.
    """
    if not explanation_ids:
        raise ValueError("loss undefined for an empty explanation")
    if not context_ids:
        raise ValueError("context must be non-empty")
    batch = [(list(context_ids), list(explanation_ids))]
    return lm_batch_loss(params, cfg, batch, dropout_rng=dropout_rng)


def lm_batch_loss(
    params: Parameters, cfg: LMConfig,
    batch: list[tuple[list[int], list[int]]],
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Token-weighted mean NLL over a batch of (context, target) pairs."""
    if not batch:
        raise ValueError("empty batch")
    T = max(len(c) + len(e) for c, e in batch)
    if T > cfg.context_window:
        raise ValueError(f"sequence length {T} exceeds context window "
                         f"{cfg.context_window}")
    B = len(batch)
    ids = np.full((B, T), V.PAD, dtype=np.intp)
    targets = np.zeros((B, T), dtype=np.intp)
    mask = np.zeros((B, T))
    for b, (ctx, expl) in enumerate(batch):
        if not ctx or not expl:
            raise ValueError("each pair needs non-empty context and target")
        seq = ctx + expl
        ids[b, : len(seq)] = seq
        # position len(ctx)-1+i predicts expl[i]
        for i, tok in enumerate(expl):
            p = len(ctx) - 1 + i
            targets[b, p] = tok
            mask[b, p] = 1.0
    logp = log_softmax(lm_logits(params, cfg, ids, dropout_rng=dropout_rng), axis=-1)
    B_idx, T_idx = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    picked = logp[B_idx, T_idx, targets]  # [B, T]
    total = (picked * mask).sum()
    return -total * (1.0 / mask.sum())


def sequence_log_probs(
    params: Parameters, cfg: LMConfig,
    batch: list[tuple[list[int], list[int]]],
) -> list[float]:
    """Total log-likelihood of each pair's target tokens, without dropout."""
    out = []
    for ctx, expl in batch:
        logits = lm_forward(params, cfg, ctx + expl)
        logp = logits - _logsumexp(logits)
        total = 0.0
        for i, tok in enumerate(expl):
            total += logp[len(ctx) - 1 + i, tok]
        out.append(float(total))
    return out


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def classifier_scores(
    params: Parameters, cfg: LMConfig,
    ids: np.ndarray, segments: np.ndarray, pad_mask: np.ndarray,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Per-sequence scalar scores [N] from the leading [CLS] state."""
    ids = np.asarray(ids, dtype=np.intp)
    if np.any(ids[:, 0] != V.CLS):
        raise ValueError("every classifier sequence must start with [CLS]")
    x = encode_stack(
        params, cfg, ids, causal=False, segments=segments, pad_mask=pad_mask,
        dropout_rng=dropout_rng,
    )
    cls_state = x[:, 0, :]  # [N, D]
    return (cls_state @ params["cls_head.w"] + params["cls_head.b"]).reshape(-1)


def classifier_forward(
    params: Parameters, cfg: LMConfig,
    sequences: list[list[int]], segments: list[list[int]],
) -> np.ndarray:
    """Probability over choices for one example's per-choice sequences."""
    ids, segs, pad = pad_sequences(sequences, segments)
    with no_grad():
        scores = classifier_scores(params, cfg, ids, segs, pad)
        return softmax(scores.reshape(1, -1), axis=-1).data[0]


def pad_sequences(
    sequences: list[list[int]], segments: list[list[int]]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad ragged sequences with PAD; returns (ids, segments, pad_mask)."""
    N = len(sequences)
    T = max(len(s) for s in sequences)
    ids = np.full((N, T), V.PAD, dtype=np.intp)
    segs = np.zeros((N, T), dtype=np.intp)
    pad = np.zeros((N, T), dtype=bool)
    for i, (seq, seg) in enumerate(zip(sequences, segments)):
        if len(seq) != len(seg):
            raise ValueError("sequence and segment lengths differ")
        ids[i, : len(seq)] = seq
        segs[i, : len(seq)] = seg
        pad[i, : len(seq)] = True
    return ids, segs, pad


def generate(
    params: Parameters, cfg: LMConfig, context_ids: list[int],
    max_len: int, *, temperature: float | None = None, seed: int = 0,
) -> list[int]:
    """Autoregressive continuation of context_ids.

    Greedy when temperature is None (ties broken by lowest token id),
    otherwise temperature sampling with a seeded generator. Stops after EOS
    or max_len generated tokens, whichever comes first; the EOS, when
    produced, is included in the output.
    """
    if len(context_ids) + max_len > cfg.context_window:
        raise ValueError("context too long to reserve max_len positions")
    rng = np.random.default_rng(seed)
    seq = list(context_ids)
    out: list[int] = []
    for _ in range(max_len):
        logits = lm_forward(params, cfg, seq)[-1]
        if temperature is None:
            nxt = int(np.argmax(logits))
        else:
            logp = (logits / temperature) - _logsumexp(logits / temperature)
            nxt = int(rng.choice(len(logits), p=np.exp(logp).ravel()))
        out.append(nxt)
        seq.append(nxt)
        if nxt == V.EOS:
            break
    return out


# ---- checkpoints ----


def save_checkpoint(
    path, params: Parameters, cfg: LMConfig, vocabulary: V.Vocabulary, kind: str
) -> None:
    """Write a self-describing checkpoint: config, vocab, tensors, step."""
    arrays = {f"param/{name}": t.data for name, t in params.tensors.items()}
    meta = {
        "kind": kind,
        "config": asdict(cfg),
        "vocab": [vocabulary.token(i) for i in range(len(vocabulary))],
        "step": params.step,
    }
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path) -> tuple[Parameters, LMConfig, V.Vocabulary, str]:
    """Load a checkpoint, validating tensor shapes against its config."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        cfg = LMConfig(**meta["config"])
        expected = (lm_param_shapes(cfg) if meta["kind"] == "lm"
                    else classifier_param_shapes(cfg))
        tensors = {}
        for key in data.files:
            if not key.startswith("param/"):
                continue
            name = key[len("param/"):]
            if name not in expected:
                raise ValueError(f"unexpected tensor {name!r} in checkpoint")
            if tuple(data[key].shape) != expected[name]:
                raise ValueError(
                    f"shape mismatch for {name!r}: checkpoint has "
                    f"{data[key].shape}, config implies {expected[name]}"
                )
            tensors[name] = parameter(np.asarray(data[key], dtype=np.float64))
        missing = set(expected) - set(tensors)
        if missing:
            raise ValueError(f"checkpoint missing tensors: {sorted(missing)}")
    params = Parameters(tensors, step=int(meta["step"]))
    vocabulary = V.Vocabulary(meta["vocab"])
    return params, cfg, vocabulary, meta["kind"]
