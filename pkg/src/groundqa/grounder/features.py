"""Feature-file IO and a hashing text featurizer for offline runs."""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from ..jsonl import read_jsonl
from .types import ClipSequence, QueryTokens

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def clip_sequence_from_dict(obj: dict, line: int | None = None) -> ClipSequence:
    try:
        return ClipSequence(
            video_id=str(obj["video_id"]),
            clip_duration_s=float(obj["clip_duration_s"]),
            timestamps=np.asarray(obj["timestamps"], dtype=np.float64),
            features=np.asarray(obj["features"], dtype=np.float64),
        )
    except KeyError as exc:
        raise SchemaError("missing required field", field=str(exc.args[0]), line=line) from exc
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), field="features", line=line) from exc


def clip_sequence_to_dict(seq: ClipSequence) -> dict:
    return {
        "video_id": seq.video_id,
        "clip_duration_s": seq.clip_duration_s,
        "timestamps": seq.timestamps.tolist(),
        "features": seq.features.tolist(),
    }


def query_tokens_from_dict(obj: dict, line: int | None = None) -> QueryTokens:
    try:
        return QueryTokens(str(obj["query_id"]), np.asarray(obj["tokens"], dtype=np.float64))
    except KeyError as exc:
        raise SchemaError("missing required field", field=str(exc.args[0]), line=line) from exc
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), field="tokens", line=line) from exc


def load_clip_sequences(path: str | Path) -> dict[str, ClipSequence]:
    out = {}
    for line, obj in read_jsonl(path):
        seq = clip_sequence_from_dict(obj, line)
        if seq.video_id in out:
            raise SchemaError(f"duplicate video_id {seq.video_id!r}", field="video_id", line=line)
        out[seq.video_id] = seq
    return out


def load_query_tokens(path: str | Path) -> dict[str, QueryTokens]:
    out = {}
    for line, obj in read_jsonl(path):
        q = query_tokens_from_dict(obj, line)
        if q.query_id in out:
            raise SchemaError(f"duplicate query_id {q.query_id!r}", field="query_id", line=line)
        out[q.query_id] = q
    return out


def query_id(question_id: str, option_index: int) -> str:
    return f"{question_id}:{option_index}"


def hash_tokens(text: str, d_in: int, max_tokens: int = 32, query: str = "") -> QueryTokens:
    """Deterministic bag-of-words embedding: each word seeds its own vector.

    Stands in for a real text encoder when no token file is supplied.
    """
    words = _TOKEN_RE.findall(text.lower())[:max_tokens] or ["<empty>"]
    rows = []
    for w in words:
        seed = int.from_bytes(hashlib.sha256(w.encode("utf-8")).digest()[:8], "little")
        rows.append(np.random.default_rng(seed).standard_normal(d_in))
    return QueryTokens(query, np.stack(rows))
