"""Causal language models for finetuning experiments.

Two model families are supported:

- :class:`TinyCausalLM` — a small word-level neural bigram model
  (embedding, one hidden layer, vocabulary projection; biases everywhere a
  layer can carry one) used for CPU smoke runs. It is deliberately simple:
  the next-token distribution depends on the current token only, which is
  enough structure for bias-only finetuning to matter while keeping desk
  runs in seconds.
- Hugging Face causal LMs (GPT2-class), loaded lazily through
  ``transformers`` when a model identifier is not "tiny"; dropout is
  forced to 0 everywhere, matching the deterministic-training setup.

Both expose the same minimal surface: ``vocab_size``, ``encode(text)``
(with a beginning-of-sequence token), and ``next_token_logits(input_ids)``
returning one logit row per position.
"""

from __future__ import annotations

import re
from typing import Sequence

import torch
from torch import nn

from .errors import ConfigError

BOS = "<bos>"
UNK = "<unk>"

_TOKEN_RE = re.compile(r"\S+")


class WordTokenizer:
    """Whitespace word tokenizer with a fixed vocabulary."""

    def __init__(self, texts: Sequence[str]):
        vocab = {BOS: 0, UNK: 1}
        for text in texts:
            for word in _TOKEN_RE.findall(text):
                if word not in vocab:
                    vocab[word] = len(vocab)
        self.vocab = vocab
        self.bos_id = vocab[BOS]
        self.unk_id = vocab[UNK]

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str, add_bos: bool = True) -> list[int]:
        ids = [self.vocab.get(w, self.unk_id) for w in _TOKEN_RE.findall(text)]
        return ([self.bos_id] + ids) if add_bos else ids


class TinyCausalLM(nn.Module):
    """Word-level neural bigram: logits(next) = W2 tanh(W1 e(current) + b1) + b2."""

    def __init__(self, tokenizer: WordTokenizer, embed_dim: int = 32, hidden_dim: int = 64):
        super().__init__()
        self.tokenizer = tokenizer
        vocab = len(tokenizer)
        self.embed = nn.Embedding(vocab, embed_dim)
        self.hidden = nn.Linear(embed_dim, hidden_dim, bias=True)
        self.out = nn.Linear(hidden_dim, vocab, bias=True)

    @property
    def vocab_size(self) -> int:
        return len(self.tokenizer)

    def encode(self, text: str) -> list[int]:
        return self.tokenizer.encode(text)

    def next_token_logits(self, input_ids: torch.Tensor) -> torch.Tensor:
        """Per-position logits for the following token; shape (..., vocab)."""
        h = torch.tanh(self.hidden(self.embed(input_ids)))
        return self.out(h)


def build_tiny_model(
    corpus_texts: Sequence[str], seed: int, embed_dim: int = 32, hidden_dim: int = 64
) -> TinyCausalLM:
    """Deterministically initialized tiny model over the given corpus.

    The output bias is initialized with a wide spread while the weight
    matrices stay small: the model's unigram preferences (and therefore
    its erasure) are dominated by an additive bias term, the regime where
    bias-only finetuning is most effective.
    """
    tokenizer = WordTokenizer(corpus_texts)
    generator = torch.Generator().manual_seed(seed)
    model = TinyCausalLM(tokenizer, embed_dim=embed_dim, hidden_dim=hidden_dim)
    with torch.no_grad():
        for name, param in model.named_parameters():
            scale = 1.25 if name == "out.bias" else 0.25
            param.copy_(
                torch.empty_like(param).normal_(0.0, scale, generator=generator)
            )
    return model


class HFCausalLM(nn.Module):
    """Adapter giving a transformers causal LM the same scoring surface."""

    def __init__(self, name_or_path: str):
        super().__init__()
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError:
            raise ConfigError(
                "transformers is required for Hugging Face models; "
                "install the [hf] extra"
            ) from None
        try:
            self._tok = AutoTokenizer.from_pretrained(name_or_path)
            self.model = AutoModelForCausalLM.from_pretrained(name_or_path)
        except Exception as exc:  # model not cached / unreachable hub
            raise ConfigError(
                f"could not load model {name_or_path!r}: {exc}"
            ) from None
        config = self.model.config
        for field in ("resid_pdrop", "embd_pdrop", "attn_pdrop", "summary_first_dropout"):
            if hasattr(config, field):
                setattr(config, field, 0.0)
        for module in self.model.modules():
            if isinstance(module, nn.Dropout):
                module.p = 0.0
        self.model.eval()

    @property
    def vocab_size(self) -> int:
        return self.model.config.vocab_size

    def encode(self, text: str) -> list[int]:
        ids = self._tok.encode(text)
        bos = self._tok.bos_token_id
        if bos is not None and (not ids or ids[0] != bos):
            ids = [bos] + ids
        return ids

    def next_token_logits(self, input_ids: torch.Tensor) -> torch.Tensor:
        return self.model(input_ids.unsqueeze(0)).logits.squeeze(0)


def load_model(identifier: str, corpus_texts: Sequence[str], seed: int) -> nn.Module:
    """Resolve a model identifier: "tiny" or a transformers name/path."""
    if identifier == "tiny":
        return build_tiny_model(corpus_texts, seed)
    return HFCausalLM(identifier)
