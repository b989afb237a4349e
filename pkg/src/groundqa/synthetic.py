"""Deterministic toy corpus and toy model weights bundled with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .grounder.features import clip_sequence_to_dict
from .grounder.types import ClipSequence
from .grounder.weights import init_weights, save_weights
from .jsonl import write_jsonl

TOY_DIMS = {"d_in": 24, "d": 16, "h": 4, "k": 2, "max_len": 32}
TOY_CLIPS = 12
TOY_SEED = 20240601

_ACTORS = ["boy", "girl", "man", "woman", "dog", "cat", "baby", "old man", "child", "lady"]
_PLACES = ["sofa", "grass", "table", "floor", "bed", "stairs", "car", "pool", "kitchen", "garden"]
_ACTIONS = [
    "fell over", "laughed", "picked up a ball", "waved at the camera", "ran away",
    "sat down", "clapped", "jumped", "cried", "turned around",
]
_TYPES = ["Cau", "Tem", "Des"]


def _question(i: int, rng) -> dict:
    actor = _ACTORS[i % len(_ACTORS)]
    place = _PLACES[(3 * i) % len(_PLACES)]
    qtype = _TYPES[i % len(_TYPES)]
    if qtype == "Cau":
        text = f"why did the {actor} move near the {place}?"
    elif qtype == "Tem":
        text = f"what did the {actor} do after reaching the {place}?"
    else:
        text = f"what is the {actor} doing at the {place}?"
    picks = rng.choice(len(_ACTIONS), size=5, replace=False)
    options = [f"the {actor} {_ACTIONS[p]}" for p in picks]
    return {"question": text, "options": options, "question_type": qtype}


def make_corpus(n: int = 10, seed: int = TOY_SEED) -> tuple[list[dict], list[ClipSequence]]:
    """Questions with planted ground-truth spans plus matching clip features.

    Each video has ``TOY_CLIPS`` clips; clip features inside the planted span
    share a common direction so a grounding model has something to find.
    """
    rng = np.random.default_rng(seed)
    records, videos = [], []
    for i in range(n):
        clip_len = float(rng.choice([2.0, 2.5, 3.0, 4.0]))
        duration = clip_len * TOY_CLIPS
        first = int(rng.integers(0, TOY_CLIPS - 4))
        width = int(rng.integers(2, 5))
        spans = [[first * clip_len, (first + width) * clip_len]]
        if i % 4 == 3 and first + width + 2 < TOY_CLIPS:
            extra = first + width + 1
            spans.append([extra * clip_len, min(TOY_CLIPS, extra + 2) * clip_len])
        q = _question(i, rng)
        vid = f"vid{i:03d}"
        records.append(
            {
                "video_id": vid,
                "question_id": f"q{i:03d}",
                "question": q["question"],
                "options": q["options"],
                "answer_index": int(rng.integers(0, 5)),
                "question_type": q["question_type"],
                "duration_s": duration,
                "gt_spans": spans,
            }
        )
        centers = (np.arange(TOY_CLIPS) + 0.5) * clip_len
        feats = 0.5 * rng.standard_normal((TOY_CLIPS, TOY_DIMS["d_in"]))
        signal = rng.standard_normal(TOY_DIMS["d_in"])
        for s, e in spans:
            inside = (centers >= s) & (centers <= e)
            feats[inside] += signal
        feats = feats.astype("<f4").astype(np.float64)
        videos.append(ClipSequence(vid, clip_len, centers, feats))
    return records, videos


def toy_weights():
    return init_weights(**TOY_DIMS, seed=TOY_SEED)


def write_bundle(out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, videos = make_corpus()
    paths = {
        "dataset": out / "synthetic_dataset.jsonl",
        "features": out / "synthetic_features.jsonl",
        "weights": out / "toy_weights.lead",
    }
    write_jsonl(paths["dataset"], records)
    write_jsonl(paths["features"], [clip_sequence_to_dict(v) for v in videos])
    save_weights(paths["weights"], toy_weights())
    return paths


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled data file (``dataset``, ``features`` or ``weights``)."""
    filename = {
        "dataset": "synthetic_dataset.jsonl",
        "features": "synthetic_features.jsonl",
        "weights": "toy_weights.lead",
    }[name]
    return Path(str(resources.files("groundqa").joinpath("data", filename)))


if __name__ == "__main__":
    import sys

    for name, path in write_bundle(sys.argv[1] if len(sys.argv) > 1 else "src/groundqa/data").items():
        print(f"{name}: {path}")
