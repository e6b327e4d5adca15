"""Training loop: conditional log-likelihood with the Adafactor recipe (no
warm-up), early stopping on validation loss, loss curve CSV, and a
self-contained checkpoint directory (model.pt, vocab.json, spec.json).
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn
from transformers.optimization import Adafactor

from .data import PAD, Record, Vocab, load_records, split_train_val
from .model import ModelConfig, Seq2SeqTransformer

log = logging.getLogger(__name__)


@dataclass
class TrainSpec:
    checkpoint: str = "tiny"        # architecture preset (no hub checkpoints offline)
    learning_rate: float = 5e-5
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    beam_size: int = 4
    seed: int = 0
    task_filter: tuple[str, ...] = ()
    max_steps: int | None = None    # None: epoch-driven
    max_input_tokens: int = 512     # hard cap; upstream truncation owns real splitting
    max_target_tokens: int = 256
    val_fraction: float = 0.1
    dropout: float = 0.1

    def to_json(self) -> dict:
        d = asdict(self)
        d["task_filter"] = list(self.task_filter)
        return d


@dataclass
class TrainResult:
    checkpoint_dir: Path
    epoch_losses: list[tuple[int, float, float]]  # (epoch, train_loss, val_loss)
    step_losses: list[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def initial_loss(self) -> float:
        return self.step_losses[0]

    @property
    def final_loss(self) -> float:
        return self.step_losses[-1]


def _batches(records: list[Record], vocab: Vocab, spec: TrainSpec):
    for start in range(0, len(records), spec.batch_size):
        chunk = records[start:start + spec.batch_size]
        srcs = [vocab.encode(r.input_text, max_len=spec.max_input_tokens) for r in chunk]
        tgts = [vocab.encode(r.target_text, max_len=spec.max_target_tokens, add_bos_eos=True)
                for r in chunk]
        s_len = max(len(s) for s in srcs)
        t_len = max(len(t) for t in tgts)
        src = torch.full((len(chunk), s_len), PAD, dtype=torch.long)
        tgt = torch.full((len(chunk), t_len), PAD, dtype=torch.long)
        for i, (s, t) in enumerate(zip(srcs, tgts)):
            src[i, : len(s)] = torch.tensor(s)
            tgt[i, : len(t)] = torch.tensor(t)
        yield src, tgt


def _loss_on(model: Seq2SeqTransformer, src: torch.Tensor, tgt: torch.Tensor,
             criterion: nn.Module) -> torch.Tensor:
    logits = model(src, tgt[:, :-1])
    return criterion(logits.reshape(-1, logits.size(-1)), tgt[:, 1:].reshape(-1))


def train(spec: TrainSpec, training_jsonl: str | Path, out_dir: str | Path) -> TrainResult:
    """Fit the model on a TrainingExample file; returns losses + checkpoint dir.

    Stops early when validation loss has not improved for `patience`
    consecutive epochs. Deterministic for a fixed seed on fixed hardware.
    """
    records = load_records(training_jsonl, task_filter=spec.task_filter or None)
    torch.manual_seed(spec.seed)
    torch.set_num_threads(1)

    train_recs, val_recs = split_train_val(records, spec.val_fraction, spec.seed)
    if not train_recs:
        train_recs, val_recs = records, []
    vocab = Vocab.build(records)
    config = ModelConfig.from_preset(
        spec.checkpoint, vocab_size=len(vocab),
        max_len=max(spec.max_input_tokens, spec.max_target_tokens) + 2,
        dropout=spec.dropout,
    )
    model = Seq2SeqTransformer(config)
    optimizer = Adafactor(
        model.parameters(), lr=spec.learning_rate,
        relative_step=False, scale_parameter=False, warmup_init=False,
    )
    criterion = nn.CrossEntropyLoss(ignore_index=PAD)

    epoch_losses: list[tuple[int, float, float]] = []
    step_losses: list[float] = []
    best_val = float("inf")
    bad_epochs = 0
    stopped_early = False
    steps = 0

    for epoch in range(1, spec.max_epochs + 1):
        model.train()
        total, n_batches = 0.0, 0
        for src, tgt in _batches(train_recs, vocab, spec):
            optimizer.zero_grad()
            loss = _loss_on(model, src, tgt, criterion)
            loss.backward()
            optimizer.step()
            step_losses.append(loss.item())
            total += loss.item()
            n_batches += 1
            steps += 1
            if spec.max_steps is not None and steps >= spec.max_steps:
                break
        train_loss = total / max(1, n_batches)

        model.eval()
        if val_recs:
            with torch.no_grad():
                val_total, val_batches = 0.0, 0
                for src, tgt in _batches(val_recs, vocab, spec):
                    val_total += _loss_on(model, src, tgt, criterion).item()
                    val_batches += 1
            val_loss = val_total / max(1, val_batches)
        else:
            val_loss = train_loss
        epoch_losses.append((epoch, train_loss, val_loss))
        log.info("epoch %d: train %.4f val %.4f", epoch, train_loss, val_loss)

        if val_loss < best_val - 1e-6:
            best_val = val_loss
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= spec.patience:
                stopped_early = True
                log.info("early stop after %d epochs without improvement", bad_epochs)
                break
        if spec.max_steps is not None and steps >= spec.max_steps:
            break

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save(out_dir / "model.pt")
    (out_dir / "vocab.json").write_text(json.dumps(vocab.to_json()), encoding="utf-8")
    (out_dir / "spec.json").write_text(json.dumps(spec.to_json(), indent=2), encoding="utf-8")
    with (out_dir / "loss_curve.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        writer.writerows(epoch_losses)

    return TrainResult(checkpoint_dir=out_dir, epoch_losses=epoch_losses,
                       step_losses=step_losses, stopped_early=stopped_early)


def load_checkpoint(checkpoint_dir: str | Path) -> tuple[Seq2SeqTransformer, Vocab, TrainSpec]:
    d = Path(checkpoint_dir)
    if not (d / "model.pt").exists():
        raise FileNotFoundError(f"no checkpoint at {d}")
    model = Seq2SeqTransformer.load(d / "model.pt")
    vocab = Vocab.from_json(json.loads((d / "vocab.json").read_text(encoding="utf-8")))
    spec_raw = json.loads((d / "spec.json").read_text(encoding="utf-8"))
    spec_raw["task_filter"] = tuple(spec_raw.get("task_filter", ()))
    spec = TrainSpec(**spec_raw)
    return model, vocab, spec
