"""Response embedding: serialization, BPE tokenizer, transformer encoder,
masked-language-model pretraining, and the null/hashing fallback embedders."""

from .serialize import serialize_response
from .bpe import Tokenizer, build_tokenizer
from .transformer import TransformerConfig, TransformerEncoder
from .pretrain import PretrainResult, pretrain, load_checkpoint, save_checkpoint
from .vectorizers import (
    HashEmbedder,
    NullEmbedder,
    TransformerEmbedder,
    hash_embed,
    null_embed,
)
from .corpus import generate_corpus, load_corpus_exchanges, load_corpus_sentences

__all__ = [
    "serialize_response",
    "Tokenizer",
    "build_tokenizer",
    "TransformerConfig",
    "TransformerEncoder",
    "PretrainResult",
    "pretrain",
    "save_checkpoint",
    "load_checkpoint",
    "NullEmbedder",
    "HashEmbedder",
    "TransformerEmbedder",
    "null_embed",
    "hash_embed",
    "generate_corpus",
    "load_corpus_exchanges",
    "load_corpus_sentences",
]
