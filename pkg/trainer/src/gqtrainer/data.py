"""Training-data contract: JSONL records with task, input_text, target_text,
doc_id, qid. Schema violations fail before any training step. Tokenization is
word-level over whitespace; the vocabulary is built from the training file.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

TASKS = ("PP", "AE", "QG", "Joint", "JointR")

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    task: str
    input_text: str
    target_text: str
    doc_id: str
    qid: str


def load_records(path: str | Path, task_filter: Sequence[str] | None = None) -> list[Record]:
    """Read and validate TrainingExample JSONL; optionally keep a task subset."""
    records: list[Record] = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            missing = [k for k in ("task", "input_text", "target_text", "doc_id", "qid")
                       if k not in d]
            if missing:
                raise SchemaError(f"{path}:{lineno}: missing fields {missing}")
            if d["task"] not in TASKS:
                raise SchemaError(f"{path}:{lineno}: unknown task {d['task']!r}")
            if not d["input_text"] or not d["target_text"]:
                raise SchemaError(f"{path}:{lineno}: empty input_text or target_text")
            records.append(Record(
                task=d["task"], input_text=d["input_text"], target_text=d["target_text"],
                doc_id=str(d["doc_id"]), qid=str(d["qid"]),
            ))
    if not records:
        raise SchemaError(f"{path}: no training records")
    if task_filter:
        records = [r for r in records if r.task in task_filter]
        if not records:
            raise SchemaError(f"{path}: no records left after task filter {task_filter}")
    return records


def split_train_val(records: list[Record], val_fraction: float, seed: int) -> tuple[list[Record], list[Record]]:
    """Seeded shuffle split; validation gets at least one record when possible."""
    order = list(records)
    random.Random(seed).shuffle(order)
    n_val = max(1, int(len(order) * val_fraction)) if len(order) > 1 else 0
    return order[n_val:], order[:n_val]


class Vocab:
    """Word-level vocabulary with pad/bos/eos/unk specials."""

    def __init__(self, tokens: Iterable[str]):
        seen = dict.fromkeys(tokens)
        self.itos: list[str] = list(SPECIALS) + [t for t in seen if t not in SPECIALS]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @classmethod
    def build(cls, records: Sequence[Record]) -> "Vocab":
        def stream():
            for r in records:
                yield from r.input_text.split()
                yield from r.target_text.split()
        return cls(stream())

    def encode(self, text: str, max_len: int | None = None, add_bos_eos: bool = False) -> list[int]:
        ids = [self.stoi.get(t, UNK) for t in text.split()]
        if max_len is not None:
            ids = ids[:max_len]
        if add_bos_eos:
            ids = [BOS, *ids, EOS]
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        words = []
        for i in ids:
            if i in (PAD, BOS):
                continue
            if i == EOS:
                break
            words.append(self.itos[i] if 0 <= i < len(self.itos) else "<unk>")
        return " ".join(words)

    def to_json(self) -> dict:
        return {"itos": self.itos}

    @classmethod
    def from_json(cls, payload: dict) -> "Vocab":
        vocab = cls.__new__(cls)
        vocab.itos = list(payload["itos"])
        vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
        return vocab
