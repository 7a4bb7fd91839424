"""Compact encoder-only transformer with hand-written forward and backward.

Pre-norm multi-head self-attention + ReLU feed-forward blocks, a learned
positional embedding, a weight-tied masked-token prediction head, and a
fixed linear projection from model width to the published embedding width.
Everything runs on numpy; gradients are derived analytically so they can be
checked against finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .bpe import NUM_SPECIALS, PAD


@dataclass
class TransformerConfig:
    vocab_size: int
    layers: int = 4
    heads: int = 8
    dim: int = 256
    ffn_dim: int = 1024
    max_seq: int = 512
    embed_width: int = 768
    dtype: str = "float32"
    init_scale: float = 0.02

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TransformerConfig":
        return cls(**data)


def _ln_forward(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _ln_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(0)
    db = dy.reshape(-1, dy.shape[-1]).sum(0)
    m1 = dxhat.mean(-1, keepdims=True)
    m2 = (dxhat * xhat).mean(-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


class TransformerEncoder:
    def __init__(self, cfg: TransformerConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dt = cfg.np_dtype
        s = cfg.init_scale
        D, F, V, S, E = cfg.dim, cfg.ffn_dim, cfg.vocab_size, cfg.max_seq, cfg.embed_width

        def w(*shape):
            return (rng.standard_normal(shape) * s).astype(dt)

        p: dict[str, np.ndarray] = {
            "tok_emb": w(V, D),
            "pos_emb": w(S, D),
            "lnf_g": np.ones(D, dt),
            "lnf_b": np.zeros(D, dt),
            "mlm_bias": np.zeros(V, dt),
            "proj_w": w(D, E),
            "proj_b": np.zeros(E, dt),
        }
        for i in range(cfg.layers):
            p[f"l{i}.wq"] = w(D, D)
            p[f"l{i}.wk"] = w(D, D)
            p[f"l{i}.wv"] = w(D, D)
            p[f"l{i}.wo"] = w(D, D)
            p[f"l{i}.bq"] = np.zeros(D, dt)
            p[f"l{i}.bk"] = np.zeros(D, dt)
            p[f"l{i}.bv"] = np.zeros(D, dt)
            p[f"l{i}.bo"] = np.zeros(D, dt)
            p[f"l{i}.ln1_g"] = np.ones(D, dt)
            p[f"l{i}.ln1_b"] = np.zeros(D, dt)
            p[f"l{i}.ln2_g"] = np.ones(D, dt)
            p[f"l{i}.ln2_b"] = np.zeros(D, dt)
            p[f"l{i}.w1"] = w(D, F)
            p[f"l{i}.b1"] = np.zeros(F, dt)
            p[f"l{i}.w2"] = w(F, D)
            p[f"l{i}.b2"] = np.zeros(D, dt)
        self.params = p

    # -- forward ------------------------------------------------------------

    def hidden_states(self, ids: np.ndarray, pad_mask: np.ndarray):
        """Final-layer hidden states (B, S, D) plus the backward cache.

        ids: int array (B, S); pad_mask: bool (B, S), True where real.
        """
        cfg, p = self.cfg, self.params
        B, S = ids.shape
        if S > cfg.max_seq:
            raise ValueError(f"sequence length {S} exceeds max_seq {cfg.max_seq}")
        H, D = cfg.heads, cfg.dim
        dh = D // H
        dt = cfg.np_dtype
        scale = dt(1.0 / np.sqrt(dh))

        x = p["tok_emb"][ids] + p["pos_emb"][:S]
        key_bias = np.where(pad_mask[:, None, None, :], dt(0.0), dt(-1e9))
        layers = []
        for i in range(cfg.layers):
            lp = f"l{i}."
            a_in, ln1_cache = _ln_forward(x, p[lp + "ln1_g"], p[lp + "ln1_b"])
            a2 = a_in.reshape(-1, D)
            q = (a2 @ p[lp + "wq"] + p[lp + "bq"]).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
            k = (a2 @ p[lp + "wk"] + p[lp + "bk"]).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
            v = (a2 @ p[lp + "wv"] + p[lp + "bv"]).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
            scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale + key_bias
            scores -= scores.max(-1, keepdims=True)
            np.exp(scores, out=scores)
            scores /= scores.sum(-1, keepdims=True)
            attn = scores
            ctx = np.matmul(attn, v).transpose(0, 2, 1, 3).reshape(B, S, D)
            attn_out = (ctx.reshape(-1, D) @ p[lp + "wo"] + p[lp + "bo"]).reshape(B, S, D)
            x1 = x + attn_out
            b_in, ln2_cache = _ln_forward(x1, p[lp + "ln2_g"], p[lp + "ln2_b"])
            f_pre = b_in.reshape(-1, D) @ p[lp + "w1"] + p[lp + "b1"]
            np.maximum(f_pre, 0, out=f_pre)
            ffn_out = (f_pre @ p[lp + "w2"] + p[lp + "b2"]).reshape(B, S, D)
            x2 = x1 + ffn_out
            layers.append(
                dict(
                    ln1=ln1_cache, a_in=a_in, q=q, k=k, v=v, attn=attn, ctx=ctx,
                    ln2=ln2_cache, b_in=b_in, f=f_pre, x1=x1,
                )
            )
            x = x2
        h, lnf_cache = _ln_forward(x, p["lnf_g"], p["lnf_b"])
        cache = dict(ids=ids, pad_mask=pad_mask, layers=layers, lnf=lnf_cache, scale=scale)
        return h, cache

    def mlm_loss(
        self,
        ids: np.ndarray,
        pad_mask: np.ndarray,
        sel_rows: np.ndarray,
        sel_cols: np.ndarray,
        labels: np.ndarray,
        with_cache: bool = True,
    ):
        """Mean cross-entropy over the selected (masked) positions."""
        p = self.params
        h, cache = self.hidden_states(ids, pad_mask)
        hm = h[sel_rows, sel_cols]
        logits = hm @ p["tok_emb"].T + p["mlm_bias"]
        logits -= logits.max(-1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(-1, keepdims=True)
        probs = logits
        m = labels.shape[0]
        nll = -np.log(np.maximum(probs[np.arange(m), labels], 1e-30))
        loss = float(nll.mean())
        if not with_cache:
            return loss, None
        cache.update(h=h, hm=hm, probs=probs, sel=(sel_rows, sel_cols), labels=labels)
        return loss, cache

    def mlm_accuracy(self, ids, pad_mask, sel_rows, sel_cols, labels) -> tuple[int, int]:
        """(correct, total) top-1 masked-token recovery."""
        p = self.params
        h, _ = self.hidden_states(ids, pad_mask)
        hm = h[sel_rows, sel_cols]
        logits = hm @ p["tok_emb"].T + p["mlm_bias"]
        pred = logits.argmax(-1)
        return int((pred == labels).sum()), int(labels.shape[0])

    # -- backward -------------------------------------------------------------

    def mlm_backward(self, cache) -> dict[str, np.ndarray]:
        """Gradients of the masked-token loss for every parameter."""
        cfg, p = self.cfg, self.params
        ids, pad_mask = cache["ids"], cache["pad_mask"]
        B, S = ids.shape
        H, D = cfg.heads, cfg.dim
        dh = D // H
        scale = cache["scale"]
        grads: dict[str, np.ndarray] = {}

        probs, labels = cache["probs"], cache["labels"]
        sel_rows, sel_cols = cache["sel"]
        m = labels.shape[0]
        dlogits = probs.copy()
        dlogits[np.arange(m), labels] -= 1.0
        dlogits /= m
        grads["mlm_bias"] = dlogits.sum(0)
        d_hm = dlogits @ p["tok_emb"]
        d_emb_head = dlogits.T @ cache["hm"]

        dh_full = np.zeros((B, S, D), dtype=cfg.np_dtype)
        np.add.at(dh_full, (sel_rows, sel_cols), d_hm)
        dx, dg, db = _ln_backward(dh_full, p["lnf_g"], cache["lnf"])
        grads["lnf_g"], grads["lnf_b"] = dg, db

        for i in reversed(range(cfg.layers)):
            lp = f"l{i}."
            c = cache["layers"][i]
            # ffn
            d_ffn = dx.reshape(-1, D)
            f = c["f"]
            grads[lp + "w2"] = f.T @ d_ffn
            grads[lp + "b2"] = d_ffn.sum(0)
            d_f = d_ffn @ p[lp + "w2"].T
            d_f[f <= 0] = 0.0
            b_in2 = c["b_in"].reshape(-1, D)
            grads[lp + "w1"] = b_in2.T @ d_f
            grads[lp + "b1"] = d_f.sum(0)
            d_b_in = (d_f @ p[lp + "w1"].T).reshape(B, S, D)
            d_x1, dg, db = _ln_backward(d_b_in, p[lp + "ln2_g"], c["ln2"])
            grads[lp + "ln2_g"], grads[lp + "ln2_b"] = dg, db
            d_x1 = d_x1 + dx  # residual

            # attention
            d_attn_out = d_x1.reshape(-1, D)
            ctx2 = c["ctx"].reshape(-1, D)
            grads[lp + "wo"] = ctx2.T @ d_attn_out
            grads[lp + "bo"] = d_attn_out.sum(0)
            d_ctx = (d_attn_out @ p[lp + "wo"].T).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
            attn, v, q, k = c["attn"], c["v"], c["q"], c["k"]
            d_attn = np.matmul(d_ctx, v.transpose(0, 1, 3, 2))
            d_v = np.matmul(attn.transpose(0, 1, 3, 2), d_ctx)
            d_scores = attn * (d_attn - (d_attn * attn).sum(-1, keepdims=True))
            d_q = np.matmul(d_scores, k) * scale
            d_k = np.matmul(d_scores.transpose(0, 1, 3, 2), q) * scale

            a_in2 = c["a_in"].reshape(-1, D)
            d_a_in = np.zeros_like(a_in2)
            for name, grad4 in (("wq", d_q), ("wk", d_k), ("wv", d_v)):
                g2 = grad4.transpose(0, 2, 1, 3).reshape(-1, D)
                grads[lp + name] = a_in2.T @ g2
                grads[lp + "b" + name[1]] = g2.sum(0)
                d_a_in += g2 @ p[lp + name].T
            d_a_in = d_a_in.reshape(B, S, D)
            d_x0, dg, db = _ln_backward(d_a_in, p[lp + "ln1_g"], c["ln1"])
            grads[lp + "ln1_g"], grads[lp + "ln1_b"] = dg, db
            dx = d_x0 + d_x1  # residual

        d_tok = np.zeros_like(p["tok_emb"])
        np.add.at(d_tok, ids.reshape(-1), dx.reshape(-1, D))
        d_tok += d_emb_head
        grads["tok_emb"] = d_tok
        grads["pos_emb"] = np.zeros_like(p["pos_emb"])
        grads["pos_emb"][:S] = dx.sum(0)
        # projection head is not part of the masked-token objective
        grads["proj_w"] = np.zeros_like(p["proj_w"])
        grads["proj_b"] = np.zeros_like(p["proj_b"])
        return grads

    # -- embedding ------------------------------------------------------------

    def embed_ids(self, ids: list[int]) -> np.ndarray:
        """Mean-pooled final hidden state projected to the embedding width."""
        cfg, p = self.cfg, self.params
        ids = list(ids)[: cfg.max_seq]
        arr = np.array([ids], dtype=np.int64)
        pad_mask = arr != PAD
        h, _ = self.hidden_states(arr, pad_mask)
        real = pad_mask[0]
        pooled = h[0][real].mean(0) if real.any() else h[0].mean(0)
        return (pooled @ p["proj_w"] + p["proj_b"]).astype(np.float32)

    # -- plumbing --------------------------------------------------------------

    def flat_params(self) -> list[str]:
        return sorted(self.params)

    def astype(self, dtype: str) -> "TransformerEncoder":
        self.cfg.dtype = dtype
        for k in self.params:
            self.params[k] = self.params[k].astype(self.cfg.np_dtype)
        return self


def random_mask(
    ids: np.ndarray,
    pad_mask: np.ndarray,
    vocab_size: int,
    rng: np.random.Generator,
    rate: float = 0.15,
):
    """BERT-style corruption: pick `rate` of the content tokens; of those,
    80% become MASK, 10% a random token, 10% stay unchanged. Returns the
    corrupted ids plus (rows, cols, labels) of the selected positions."""
    from .bpe import MASK

    candidates = pad_mask & (ids >= NUM_SPECIALS)
    sel = (rng.random(ids.shape) < rate) & candidates
    rows, cols = np.nonzero(sel)
    labels = ids[rows, cols].copy()
    corrupted = ids.copy()
    action = rng.random(rows.shape[0])
    mask_it = action < 0.8
    random_it = (action >= 0.8) & (action < 0.9)
    corrupted[rows[mask_it], cols[mask_it]] = MASK
    n_random = int(random_it.sum())
    if n_random:
        corrupted[rows[random_it], cols[random_it]] = rng.integers(
            NUM_SPECIALS, vocab_size, n_random
        )
    return corrupted, rows, cols, labels
