"""Declarative run configuration and the per-run manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .contexts import Condition
from .memory import MemoryConfig
from .segmentation import SegmentationConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderSpec:
    kind: str  # "mock" is the only in-repo chat/embedding/logprob implementation
    model_id: str = "mock"


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    episodes: tuple[Path, ...]
    seed: int = 0
    conditions: tuple[str, ...] = tuple(c.value for c in Condition)
    providers: dict = field(
        default_factory=lambda: {
            "chat": ProviderSpec("mock"),
            "embedding": ProviderSpec("mock"),
            "logprob": ProviderSpec("mock"),
        }
    )
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    rating_runs: int = 2
    annotators: int = 3
    annotator_noise: float = 0.5
    cache_policy: str = "use"  # use | refresh | off

    def __post_init__(self):
        bad = [c for c in self.conditions if c not in {x.value for x in Condition}]
        if bad:
            raise ConfigError(f"unknown conditions: {bad}")
        if self.cache_policy not in ("use", "refresh", "off"):
            raise ConfigError(f"unknown cache policy {self.cache_policy!r}")
        if self.rating_runs < 1:
            raise ConfigError("rating_runs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "out_dir": str(self.out_dir),
            "episodes": [str(p) for p in self.episodes],
            "seed": self.seed,
            "conditions": list(self.conditions),
            "providers": {
                label: {"kind": spec.kind, "model_id": spec.model_id}
                for label, spec in sorted(self.providers.items())
            },
            "segmentation": asdict(self.segmentation),
            "memory": asdict(self.memory),
            "rating_runs": self.rating_runs,
            "annotators": self.annotators,
            "annotator_noise": self.annotator_noise,
            "cache_policy": self.cache_policy,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_config(
    path: Path | None,
    out_dir: Path | None = None,
    seed: int | None = None,
    conditions: tuple[str, ...] | None = None,
    providers: str | None = None,
    cache_policy: str | None = None,
) -> PipelineConfig:
    """Build a config from a YAML file plus CLI overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    try:
        seg = SegmentationConfig(**data.get("segmentation", {}))
        mem_raw = data.get("memory", {})
        mem = MemoryConfig(**mem_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))

    provider_map = {
        "chat": ProviderSpec("mock"),
        "embedding": ProviderSpec("mock"),
        "logprob": ProviderSpec("mock"),
    }
    for label, spec in (data.get("providers") or {}).items():
        provider_map[label] = ProviderSpec(
            kind=spec.get("kind", "mock"), model_id=spec.get("model_id", "mock")
        )
    if providers:
        # CLI form: "chat=mock,logprob=none"
        for pair in providers.split(","):
            if "=" not in pair:
                raise ConfigError(f"bad provider override {pair!r}; use label=kind")
            label, kind = pair.split("=", 1)
            provider_map[label.strip()] = ProviderSpec(kind.strip())
    for label, spec in provider_map.items():
        if spec.kind not in ("mock", "none"):
            raise ConfigError(
                f"provider {label!r}: unknown kind {spec.kind!r} (mock or none)"
            )

    resolved_out = Path(out_dir or data.get("out_dir") or "out")
    episodes = tuple(Path(p) for p in data.get("episodes", []))
    if not episodes:
        raise ConfigError("config must list at least one episode file")
    return PipelineConfig(
        out_dir=resolved_out,
        episodes=episodes,
        seed=seed if seed is not None else int(data.get("seed", 0)),
        conditions=tuple(conditions or data.get("conditions")
                         or [c.value for c in Condition]),
        providers=provider_map,
        segmentation=seg,
        memory=mem,
        rating_runs=int(data.get("rating_runs", 2)),
        annotators=int(data.get("annotators", 3)),
        annotator_noise=float(data.get("annotator_noise", 0.5)),
        cache_policy=cache_policy or data.get("cache_policy", "use"),
    )


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    stages: dict[str, dict] = field(default_factory=dict)

    def record_stage(
        self,
        stage: str,
        inputs: dict[str, str],
        outputs: dict[str, str],
        provider_calls: dict[str, int],
        wall_seconds: float,
    ) -> None:
        self.stages[stage] = {
            "inputs": inputs,
            "outputs": outputs,
            "provider_calls": provider_calls,
            "wall_seconds": wall_seconds,
        }

    def save(self, path: Path) -> None:
        path.write_text(
            json.dumps(
                {
                    "run_id": self.run_id,
                    "config_digest": self.config_digest,
                    "stages": self.stages,
                },
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )

    @staticmethod
    def load(path: Path) -> "RunManifest":
        data = json.loads(path.read_text(encoding="utf-8"))
        manifest = RunManifest(
            run_id=data["run_id"], config_digest=data["config_digest"]
        )
        manifest.stages = data["stages"]
        return manifest


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
