"""Byte-pair-encoding tokenizer built from scratch.

Training starts from raw bytes and repeatedly merges the most frequent
adjacent token pair (ties broken by the lexicographically smallest pair of
token byte strings) until the vocabulary budget is reached or no pair
occurs at least twice. Counting treats overlapping occurrences the naive
way (the pair (a, a) occurs twice in "aaa"); merging consumes occurrences
left to right, so overlaps collapse into one merge.

Token id layout: 5 specials, then the 256 byte tokens, then merges.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..errors import EmptyCorpus

PAD, MASK, UNK, BOS, EOS = 0, 1, 2, 3, 4
NUM_SPECIALS = 5
BYTE_BASE = NUM_SPECIALS  # byte b is token BYTE_BASE + b
FIRST_MERGE_ID = BYTE_BASE + 256
SPECIAL_TOKENS = {"pad": PAD, "mask": MASK, "unk": UNK, "bos": BOS, "eos": EOS}


@dataclass
class Tokenizer:
    merges: list[tuple[int, int]] = field(default_factory=list)
    max_vocab: int = FIRST_MERGE_ID

    def __post_init__(self):
        self._rebuild()

    def _rebuild(self) -> None:
        self.vocab: dict[int, bytes] = {BYTE_BASE + b: bytes([b]) for b in range(256)}
        self.ranks: dict[tuple[int, int], int] = {}
        for rank, (a, b) in enumerate(self.merges):
            tid = FIRST_MERGE_ID + rank
            self.vocab[tid] = self.vocab[a] + self.vocab[b]
            self.ranks[(a, b)] = rank

    @property
    def vocab_size(self) -> int:
        return FIRST_MERGE_ID + len(self.merges)

    def encode(self, text: str, add_special: bool = True) -> list[int]:
        ids = self._merge_bytes(text.encode("utf-8"))
        if add_special:
            return [BOS] + ids + [EOS]
        return ids

    def _merge_bytes(self, raw: bytes) -> list[int]:
        n = len(raw)
        if n == 0:
            return []
        tok = [BYTE_BASE + b for b in raw]
        nxt = list(range(1, n)) + [-1]
        alive = [True] * n
        heap: list[tuple[int, int, int, int]] = []
        for i in range(n - 1):
            rank = self.ranks.get((tok[i], tok[i + 1]))
            if rank is not None:
                heap.append((rank, i, tok[i], tok[i + 1]))
        heapq.heapify(heap)
        while heap:
            rank, i, a, b = heapq.heappop(heap)
            if not alive[i] or tok[i] != a:
                continue
            j = nxt[i]
            if j == -1 or tok[j] != b:
                continue
            tok[i] = FIRST_MERGE_ID + rank
            alive[j] = False
            nxt[i] = nxt[j]
            k = nxt[i]
            if k != -1:
                new_rank = self.ranks.get((tok[i], tok[k]))
                if new_rank is not None:
                    heapq.heappush(heap, (new_rank, i, tok[i], tok[k]))
            p = self._prev_alive(alive, i)
            if p is not None:
                new_rank = self.ranks.get((tok[p], tok[i]))
                if new_rank is not None:
                    heapq.heappush(heap, (new_rank, p, tok[p], tok[i]))
        return [t for i, t in enumerate(tok) if alive[i]]

    @staticmethod
    def _prev_alive(alive: list[bool], i: int) -> int | None:
        p = i - 1
        while p >= 0 and not alive[p]:
            p -= 1
        return p if p >= 0 else None

    def decode(self, ids: Sequence[int]) -> str:
        chunks = [self.vocab[t] for t in ids if t >= BYTE_BASE and t in self.vocab]
        return b"".join(chunks).decode("utf-8", errors="replace")

    def token_bytes(self, tid: int) -> bytes:
        return self.vocab.get(tid, b"")

    def to_dict(self) -> dict:
        return {"merges": [list(m) for m in self.merges], "max_vocab": self.max_vocab}

    @classmethod
    def from_dict(cls, data: dict) -> "Tokenizer":
        return cls(
            merges=[tuple(m) for m in data["merges"]],
            max_vocab=int(data.get("max_vocab", FIRST_MERGE_ID)),
        )


def build_tokenizer(
    corpus: Iterable[str], vocab_size: int, seed: int | None = None
) -> Tokenizer:
    """Train a tokenizer on the corpus.

    The merge sequence is a pure function of (corpus, vocab_size); `seed` is
    accepted for interface symmetry with the other trainers and unused.
    Raises EmptyCorpus for an empty corpus and ValueError when vocab_size
    cannot even hold the byte alphabet plus specials.
    """
    del seed
    sentences = [s for s in corpus]
    if not sentences:
        raise EmptyCorpus("tokenizer corpus is empty")
    if vocab_size <= FIRST_MERGE_ID:
        raise ValueError(
            f"vocab_size must exceed {FIRST_MERGE_ID} (bytes + special tokens)"
        )
    budget = vocab_size - FIRST_MERGE_ID

    # collapse duplicate sentences into weights
    weights: dict[bytes, int] = {}
    for s in sentences:
        raw = s.encode("utf-8")
        weights[raw] = weights.get(raw, 0) + 1
    seqs = list(weights.keys())
    seq_weight = [weights[raw] for raw in seqs]

    toks: list[list[int]] = []
    nxts: list[list[int]] = []
    stride = max((len(raw) for raw in seqs), default=0) + 1

    counts: dict[tuple[int, int], int] = {}
    occs: dict[tuple[int, int], list[int]] = {}

    def add_occ(pair: tuple[int, int], packed: int, w: int) -> None:
        counts[pair] = counts.get(pair, 0) + w
        occs.setdefault(pair, []).append(packed)

    prvs: list[list[int]] = []
    for s, raw in enumerate(seqs):
        ids = [BYTE_BASE + b for b in raw]
        toks.append(ids)
        nxts.append(list(range(1, len(ids))) + [-1])
        prvs.append([-1] + list(range(len(ids) - 1)))
        w = seq_weight[s]
        for i in range(len(ids) - 1):
            add_occ((ids[i], ids[i + 1]), s * stride + i, w)

    vocab: dict[int, bytes] = {BYTE_BASE + b: bytes([b]) for b in range(256)}
    heap: list[tuple[int, bytes, bytes, tuple[int, int]]] = [
        (-c, vocab[p[0]], vocab[p[1]], p) for p, c in counts.items() if c >= 2
    ]
    heapq.heapify(heap)

    merges: list[tuple[int, int]] = []

    while len(merges) < budget and heap:
        neg_count, _, _, pair = heapq.heappop(heap)
        current = counts.get(pair, 0)
        if -neg_count != current:
            if current >= 2:
                heapq.heappush(heap, (-current, vocab[pair[0]], vocab[pair[1]], pair))
            continue
        if current < 2:
            break

        a, b = pair
        new_id = FIRST_MERGE_ID + len(merges)
        vocab[new_id] = vocab[a] + vocab[b]
        merges.append(pair)

        touched: set[tuple[int, int]] = set()
        for packed in occs.pop(pair, []):
            s, i = divmod(packed, stride)
            tok = toks[s]
            nxt = nxts[s]
            if tok[i] != a:
                continue
            j = nxt[i]
            if j == -1 or tok[j] != b:
                continue
            w = seq_weight[s]
            p = prvs[s][i]
            k = nxt[j]
            if p != -1:
                left = (tok[p], a)
                counts[left] = counts.get(left, 0) - w
                touched.add(left)
                add_occ((tok[p], new_id), s * stride + p, w)
                touched.add((tok[p], new_id))
            if k != -1:
                right = (b, tok[k])
                counts[right] = counts.get(right, 0) - w
                touched.add(right)
                add_occ((new_id, tok[k]), s * stride + i, w)
                touched.add((new_id, tok[k]))
            counts[pair] = counts.get(pair, 0) - w
            tok[i] = new_id
            tok[j] = -1
            nxt[i] = k
            if k != -1:
                prvs[s][k] = i
        counts.pop(pair, None)
        for t in touched:
            c = counts.get(t, 0)
            if c >= 2 and t in occs:
                heapq.heappush(heap, (-c, vocab[t[0]], vocab[t[1]], t))

    return Tokenizer(merges=merges, max_vocab=vocab_size)
