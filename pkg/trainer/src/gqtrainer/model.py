"""Compact encoder-decoder transformer with greedy/beam decoding.

No pretrained checkpoint is reachable in this environment, so the trainer
owns a from-scratch seq2seq model; `checkpoint` names an architecture preset.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from .data import BOS, EOS, PAD, Vocab

PRESETS = {
    "tiny": dict(d_model=128, nhead=4, num_layers=2, dim_feedforward=256),
    "small": dict(d_model=256, nhead=4, num_layers=3, dim_feedforward=512),
}


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    nhead: int = 4
    num_layers: int = 2
    dim_feedforward: int = 256
    dropout: float = 0.1
    max_len: int = 512

    @classmethod
    def from_preset(cls, name: str, vocab_size: int, max_len: int = 512,
                    dropout: float = 0.1) -> "ModelConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown architecture preset {name!r}; have {sorted(PRESETS)}")
        return cls(vocab_size=vocab_size, max_len=max_len, dropout=dropout, **PRESETS[name])


class Seq2SeqTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.embed = nn.Embedding(c.vocab_size, c.d_model, padding_idx=PAD)
        self.pos = nn.Embedding(c.max_len, c.d_model)
        self.core = nn.Transformer(
            d_model=c.d_model, nhead=c.nhead,
            num_encoder_layers=c.num_layers, num_decoder_layers=c.num_layers,
            dim_feedforward=c.dim_feedforward, dropout=c.dropout,
            batch_first=True,
        )
        self.out = nn.Linear(c.d_model, c.vocab_size)
        self.scale = math.sqrt(c.d_model)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.size(1), device=ids.device).clamp(max=self.config.max_len - 1)
        return self.embed(ids) * self.scale + self.pos(positions)[None, :, :]

    @staticmethod
    def _causal_mask(size: int, device=None) -> torch.Tensor:
        return torch.triu(torch.ones(size, size, dtype=torch.bool, device=device),
                          diagonal=1)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        tgt_mask = self._causal_mask(tgt_in.size(1), device=src.device)
        hidden = self.core(
            self._embed(src), self._embed(tgt_in),
            tgt_mask=tgt_mask,
            src_key_padding_mask=src == PAD,
            tgt_key_padding_mask=tgt_in == PAD,
            memory_key_padding_mask=src == PAD,
        )
        return self.out(hidden)

    @torch.no_grad()
    def encode(self, src: torch.Tensor) -> torch.Tensor:
        return self.core.encoder(self._embed(src), src_key_padding_mask=src == PAD)

    @torch.no_grad()
    def beam_search(self, src_ids: list[int], beam_size: int = 4,
                    max_len: int = 128, length_penalty: float = 1.0) -> list[int]:
        """Length-normalized beam search; returns output ids without specials."""
        self.eval()
        src = torch.tensor([src_ids], dtype=torch.long)
        memory = self.encode(src)
        pad_mask = src == PAD

        beams: list[tuple[list[int], float, bool]] = [([BOS], 0.0, False)]
        for _ in range(max_len):
            if all(done for _, _, done in beams):
                break
            candidates: list[tuple[list[int], float, bool]] = []
            for seq, score, done in beams:
                if done:
                    candidates.append((seq, score, True))
                    continue
                tgt = torch.tensor([seq], dtype=torch.long)
                tgt_mask = self._causal_mask(tgt.size(1))
                hidden = self.core.decoder(
                    self._embed(tgt), memory, tgt_mask=tgt_mask,
                    memory_key_padding_mask=pad_mask,
                )
                logprobs = torch.log_softmax(self.out(hidden[0, -1]), dim=-1)
                top = torch.topk(logprobs, beam_size)
                for logp, idx in zip(top.values.tolist(), top.indices.tolist()):
                    candidates.append((seq + [idx], score + logp, idx == EOS))
            def norm(item):
                seq, score, _ = item
                return score / (max(1, len(seq) - 1) ** length_penalty)
            beams = sorted(candidates, key=norm, reverse=True)[:beam_size]
        best = max(beams, key=lambda item: item[1] / (max(1, len(item[0]) - 1) ** length_penalty))
        out = best[0][1:]
        if out and out[-1] == EOS:
            out = out[:-1]
        return out

    def decode_text(self, vocab: Vocab, input_text: str, beam_size: int = 4,
                    max_len: int = 128) -> str:
        src = vocab.encode(input_text, max_len=self.config.max_len)
        if not src:
            raise ValueError("empty input after tokenization")
        return vocab.decode(self.beam_search(src, beam_size=beam_size, max_len=max_len))

    def save(self, path) -> None:
        torch.save({"config": asdict(self.config), "state": self.state_dict()}, path)

    @classmethod
    def load(cls, path) -> "Seq2SeqTransformer":
        payload = torch.load(path, map_location="cpu", weights_only=True)
        model = cls(ModelConfig(**payload["config"]))
        model.load_state_dict(payload["state"])
        model.eval()
        return model
