"""Pipeline configuration: one JSON document, relative paths resolved against it."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from ..errors import ParseError, SchemaError
from ..intervals import FusionConfig
from ..objectives import LossWeights
from ..sampler import SamplingPlan

BUILTIN = "builtin"


@dataclass(frozen=True)
class Paths:
    dataset: str = BUILTIN
    features: str | None = None
    queries: str | None = None
    weights: str | None = None
    cache: str = "cache"
    stage_dir: str = "stages"


@dataclass(frozen=True)
class GrounderSettings:
    mode: str = "model"  # "model" | "planted"
    fg_cutoff: float = 0.5
    score_mode: str = "fg_sal"
    noise_s: float = 0.0
    seed: int = 0
    max_query_tokens: int = 16

    def __post_init__(self):
        if self.mode not in ("planted", "model"):
            raise SchemaError(f"unknown grounder mode {self.mode!r}", field="grounder.mode")
        if self.noise_s < 0:
            raise SchemaError("must be non-negative", field="grounder.noise_s")


@dataclass(frozen=True)
class AnswerSettings:
    mode: str = "stub"  # "stub" | "external-command"
    command: tuple[str, ...] = ()
    timeout_s: float = 120.0

    def __post_init__(self):
        if self.mode not in ("stub", "external-command"):
            raise SchemaError(f"unknown answer mode {self.mode!r}", field="answer.mode")
        if self.mode == "external-command" and not self.command:
            raise SchemaError("external-command mode needs a command", field="answer.command")


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    sampling: SamplingPlan = field(default_factory=SamplingPlan)
    grounder: GrounderSettings = field(default_factory=GrounderSettings)
    answer: AnswerSettings = field(default_factory=AnswerSettings)
    client: str = "live"  # "live" | "stub"
    fps: float | None = None
    parallelism: int = 1
    base_dir: str = "."

    def __post_init__(self):
        if self.client not in ("stub", "live"):
            raise SchemaError(f"unknown client mode {self.client!r}", field="client")
        if self.parallelism < 1:
            raise SchemaError("must be >= 1", field="parallelism")

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def stage_dir(self) -> Path:
        return self.resolve(self.paths.stage_dir)

    def with_overrides(self, **sections) -> "PipelineConfig":
        return replace(self, **sections)

    def validate_paths(self) -> None:
        """Referenced input files must exist and the stage directory must be creatable."""
        for name in ("dataset", "features", "queries", "weights"):
            value = getattr(self.paths, name)
            if value in (None, BUILTIN):
                continue
            if not self.resolve(value).is_file():
                raise SchemaError(f"file not found: {self.resolve(value)}", field=f"paths.{name}")
        try:
            self.stage_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise SchemaError(f"cannot create {self.stage_dir}: {exc}", field="paths.stage_dir") from exc

    def offline(self) -> "PipelineConfig":
        """Stub rewriting and planted grounding; no network, no weights.

        The answer settings are kept, so an explicitly configured external
        command still runs.
        """
        return replace(self, client="stub", grounder=replace(self.grounder, mode="planted"))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("base_dir")
        d["answer"]["command"] = list(d["answer"]["command"])
        return d


def digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _section(cls, raw: Any, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise SchemaError("expected an object", field=name)
    try:
        return cls(**raw)
    except TypeError as exc:
        raise SchemaError(str(exc), field=name) from exc
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(str(exc), field=name) from exc


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> PipelineConfig:
    known = {"paths", "fusion", "loss", "sampling", "grounder", "answer", "client", "fps", "parallelism"}
    unknown = set(raw) - known
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)}", field="config")
    answer = dict(raw.get("answer") or {})
    if "command" in answer:
        cmd = answer["command"]
        answer["command"] = tuple([cmd] if isinstance(cmd, str) else cmd)
    return PipelineConfig(
        paths=_section(Paths, raw.get("paths"), "paths"),
        fusion=_section(FusionConfig, raw.get("fusion"), "fusion"),
        loss=_section(LossWeights, raw.get("loss"), "loss"),
        sampling=_section(SamplingPlan, raw.get("sampling"), "sampling"),
        grounder=_section(GrounderSettings, raw.get("grounder"), "grounder"),
        answer=_section(AnswerSettings, answer or None, "answer"),
        client=raw.get("client", "live"),
        fps=raw.get("fps"),
        parallelism=int(raw.get("parallelism", 1)),
        base_dir=str(base_dir),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ParseError("config file not found", path=str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", path=str(path), line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise SchemaError("config must be a JSON object", field="config")
    return config_from_dict(raw, base_dir=path.parent)
