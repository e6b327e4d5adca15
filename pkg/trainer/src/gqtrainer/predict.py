"""Batch prediction: beam decoding over an input JSONL, one PredictionRecord
per line, in input order. A record-level decode failure becomes an error entry
and the run continues.
"""
from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

from .training import load_checkpoint

log = logging.getLogger(__name__)


def _decode_config_hash(beam_size: int, max_len: int, checkpoint: str) -> str:
    blob = json.dumps({"beam": beam_size, "max_len": max_len, "checkpoint": checkpoint},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def predict(checkpoint_dir: str | Path, inputs_jsonl: str | Path,
            out_jsonl: str | Path, max_len: int = 160) -> int:
    """Decode every input record; returns the number of successful records."""
    model, vocab, spec = load_checkpoint(checkpoint_dir)
    cfg_hash = _decode_config_hash(spec.beam_size, max_len, spec.checkpoint)
    n_ok = 0
    with Path(inputs_jsonl).open("r", encoding="utf-8") as fin, \
            Path(out_jsonl).open("w", encoding="utf-8") as fout:
        for lineno, line in enumerate(fin, start=1):
            line = line.strip()
            if not line:
                continue
            record = {"doc_id": "", "task": "", "output_text": "",
                      "decode_config_hash": cfg_hash}
            try:
                d = json.loads(line)
                record["doc_id"] = str(d.get("doc_id", ""))
                record["task"] = str(d.get("task", ""))
                output = model.decode_text(vocab, d["input_text"],
                                           beam_size=spec.beam_size, max_len=max_len)
                record["output_text"] = output
                n_ok += 1
            except Exception as exc:  # record-level isolation is the contract
                log.warning("input line %d failed: %s", lineno, exc)
                record["error"] = f"line {lineno}: {exc}"
            fout.write(json.dumps(record, ensure_ascii=False) + "\n")
    return n_ok
