from __future__ import annotations

import json
from pathlib import Path

import pytest

from gqkit.datagen import JointEntry, flatten_joint
from gqtrainer.training import TrainSpec, train

TOPICS = ["erosion", "magnetism", "trade", "memory", "orbits", "immunity",
          "language", "markets"]


def toy_record(k: int) -> dict:
    """One Joint training record; the last eight documents carry two entries."""
    t = TOPICS[k % len(TOPICS)]
    anchor = f"Passage {k} of the {t} chapter develops detail {k} ."
    closing = f"Closing remark {k} about {t} ."
    entries = [JointEntry(
        anchor_sentence=anchor,
        answer_keywords=(t, f"detail{k}"),
        question=f"How does detail {k} shape our view of {t} ?",
    )]
    if k >= 24:
        entries.append(JointEntry(
            anchor_sentence=closing,
            answer_keywords=(f"remark{k}",),
            question=f"Why close with remark {k} ?",
        ))
    return {
        "task": "Joint",
        "input_text": f"Intro sentence about {t} . {anchor} {closing}",
        "target_text": flatten_joint(entries, with_roles=False),
        "doc_id": f"doc{k}",
        "qid": "ALL",
    }


def write_toy_data(path: Path, n: int = 32) -> list[dict]:
    rows = [toy_record(k) for k in range(n)]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return rows


@pytest.fixture(scope="session")
def toy_data(tmp_path_factory) -> tuple[Path, list[dict]]:
    path = tmp_path_factory.mktemp("data") / "joint32.jsonl"
    rows = write_toy_data(path)
    return path, rows


OVERFIT_SPEC = TrainSpec(
    checkpoint="tiny", learning_rate=3e-3, batch_size=8, max_epochs=150,
    patience=150, beam_size=4, seed=0, dropout=0.0, val_fraction=0.1,
    task_filter=("Joint",),
)


@pytest.fixture(scope="session")
def overfit_checkpoint(toy_data, tmp_path_factory):
    """A checkpoint memorizing the toy set; shared by training and serving tests."""
    path, _rows = toy_data
    out = tmp_path_factory.mktemp("ckpt") / "overfit"
    result = train(OVERFIT_SPEC, path, out)
    assert result.epoch_losses[-1][1] < 0.05, "overfit run failed to memorize"
    return out
