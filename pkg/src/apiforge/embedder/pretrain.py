"""Masked-language-model pretraining loop and checkpoint IO."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import CheckpointWriteFailure, CheckpointIncompatible, CorpusTooSmall, NonFiniteLoss
from ..optim import Adam, clip_grads
from .bpe import PAD, Tokenizer
from .transformer import TransformerConfig, TransformerEncoder, random_mask

CHECKPOINT_VERSION = 1
MIN_CORPUS = 100


@dataclass
class PretrainResult:
    model: TransformerEncoder
    tokenizer: Tokenizer
    epoch_losses: list[float]
    step_losses: list[float]
    holdout_accuracy: float
    holdout_total: int
    chance: float


def _pad_batch(seqs: list[list[int]], dtype=np.int64):
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=dtype)
    for r, s in enumerate(seqs):
        ids[r, : len(s)] = s
    return ids, ids != PAD


def _make_batches(order: np.ndarray, encoded: list[list[int]], batch_size: int):
    by_len = sorted(order.tolist(), key=lambda i: (len(encoded[i]), i))
    return [by_len[i : i + batch_size] for i in range(0, len(by_len), batch_size)]


def pretrain(
    sentences: list[str],
    tokenizer: Tokenizer,
    tcfg: TransformerConfig,
    seed: int = 0,
    epochs: int = 10,
    batch_size: int = 64,
    lr: float = 3e-4,
    mask_rate: float = 0.15,
    holdout_fraction: float = 0.1,
) -> PretrainResult:
    """Train the encoder with the masked-token objective.

    Splits off a held-out fraction, trains for the configured epochs, and
    measures final masked-token top-1 recovery on the held-out split. The
    whole run is a deterministic function of its arguments.
    """
    if len(sentences) < MIN_CORPUS:
        raise CorpusTooSmall(f"need at least {MIN_CORPUS} sentences, got {len(sentences)}")
    if tcfg.vocab_size != tokenizer.vocab_size:
        tcfg = TransformerConfig(**{**tcfg.to_dict(), "vocab_size": tokenizer.vocab_size})

    rng = np.random.default_rng(seed)
    encoded = [tokenizer.encode(s)[: tcfg.max_seq] for s in sentences]

    order = rng.permutation(len(encoded))
    n_holdout = max(1, int(len(encoded) * holdout_fraction))
    holdout_idx, train_idx = order[:n_holdout], order[n_holdout:]

    model = TransformerEncoder(tcfg, seed=seed)
    opt = Adam(model.params, lr=lr)
    batches = _make_batches(train_idx, encoded, batch_size)

    step_losses: list[float] = []
    epoch_losses: list[float] = []
    for _ in range(epochs):
        batch_order = rng.permutation(len(batches))
        losses = []
        for b in batch_order:
            seqs = [encoded[i] for i in batches[b]]
            ids, pad_mask = _pad_batch(seqs)
            corrupted, rows, cols, labels = random_mask(
                ids, pad_mask, tcfg.vocab_size, rng, mask_rate
            )
            if labels.shape[0] == 0:
                continue
            loss, cache = model.mlm_loss(corrupted, pad_mask, rows, cols, labels)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"masked-token loss diverged at step {len(step_losses)}")
            grads = model.mlm_backward(cache)
            clip_grads(grads)
            opt.step(model.params, grads)
            losses.append(loss)
            step_losses.append(loss)
        epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))

    eval_rng = np.random.default_rng(seed + 1)
    correct = total = 0
    holdout_batches = _make_batches(holdout_idx, encoded, batch_size)
    for batch in holdout_batches:
        seqs = [encoded[i] for i in batch]
        ids, pad_mask = _pad_batch(seqs)
        corrupted, rows, cols, labels = random_mask(
            ids, pad_mask, tcfg.vocab_size, eval_rng, mask_rate
        )
        if labels.shape[0] == 0:
            continue
        c, t = model.mlm_accuracy(corrupted, pad_mask, rows, cols, labels)
        correct += c
        total += t

    accuracy = correct / total if total else 0.0
    return PretrainResult(
        model=model,
        tokenizer=tokenizer,
        epoch_losses=epoch_losses,
        step_losses=step_losses,
        holdout_accuracy=accuracy,
        holdout_total=total,
        chance=1.0 / tcfg.vocab_size,
    )


def save_checkpoint(path: str, model: TransformerEncoder, tokenizer: Tokenizer,
                    extra: dict | None = None) -> None:
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "tcfg": model.cfg.to_dict(),
        "tokenizer": tokenizer.to_dict(),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    try:
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                     **arrays)
    except OSError as exc:
        raise CheckpointWriteFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str) -> tuple[TransformerEncoder, Tokenizer, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointIncompatible(
                f"checkpoint {path} has format {meta.get('format_version')}, "
                f"expected {CHECKPOINT_VERSION}"
            )
        cfg = TransformerConfig.from_dict(meta["tcfg"])
        tokenizer = Tokenizer.from_dict(meta["tokenizer"])
        model = TransformerEncoder(cfg, seed=0)
        for key in model.params:
            model.params[key] = data[f"param/{key}"]
    return model, tokenizer, meta
