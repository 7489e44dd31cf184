"""End-to-end experiment driver.

Loads the taxonomy and manifest, splits each clip across the simulated
RSUs, runs them against the configured backend over a virtual-clock
network, scores every output, and writes the accuracy report, timing
table, and alert log. Runs are exactly reproducible: identical config and
seeds produce byte-identical report files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .backend import (
    Backend,
    MockBackend,
    MockConfig,
    RemoteBackend,
    TimingRow,
    measure_response,
    render_timing_table,
    timing_rows_to_dicts,
)
from .clock import VirtualClock
from .evaluation import (
    EvaluationReport,
    SegmentScore,
    aggregate,
    render_report_table,
    report_to_dict,
)
from .network import (
    LinkConfig,
    SimulatedTransport,
    Topology,
    broadcast,
    register_node,
)
from .node import DEFAULT_HAZARD_SET, NodeConfig, RsuNode
from .prompting import PROMPT_TEMPLATES, PromptConfig, load_template, register_template
from .segments import ManifestError, Segment, load_manifest, split_segment, validate_annotation
from .taxonomy import Taxonomy, TaxonomyError, default_taxonomy, load_taxonomy


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    manifest_path: str
    taxonomy_path: str | None = None
    node_count: int = 3
    strategy: str = "on"  # "on" | "off" | "both"
    keyframe_policy: str = "stride(15)"
    window_half_width: int = 8
    backend: str = "mock"  # "mock" | "remote"
    backend_config: dict = field(default_factory=dict)
    link: dict = field(default_factory=dict)
    hazard_set: tuple[str, ...] = tuple(sorted(DEFAULT_HAZARD_SET))
    batch_sizes: tuple[int, ...] = (1, 15, 30)
    frames_per_call: int = 1
    template_id: str = "default"
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ConfigError("node_count must be >= 1")
        if self.window_half_width < 0:
            raise ConfigError("window_half_width must be >= 0")
        if self.strategy not in ("on", "off", "both"):
            raise ConfigError(f"strategy must be on/off/both, got {self.strategy!r}")
        if self.backend not in ("mock", "remote"):
            raise ConfigError(f"backend must be mock or remote, got {self.backend!r}")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(raw)
        if "hazard_set" in kwargs:
            kwargs["hazard_set"] = tuple(kwargs["hazard_set"])
        if "batch_sizes" in kwargs:
            kwargs["batch_sizes"] = tuple(int(b) for b in kwargs["batch_sizes"])
        if "manifest_path" not in kwargs:
            raise ConfigError("config needs manifest_path")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "taxonomy_path": self.taxonomy_path,
            "node_count": self.node_count,
            "strategy": self.strategy,
            "keyframe_policy": self.keyframe_policy,
            "window_half_width": self.window_half_width,
            "backend": self.backend,
            "backend_config": dict(self.backend_config),
            "link": dict(self.link),
            "hazard_set": list(self.hazard_set),
            "batch_sizes": list(self.batch_sizes),
            "frames_per_call": self.frames_per_call,
            "template_id": self.template_id,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def load_inputs(config: ExperimentConfig) -> tuple[Taxonomy, list[Segment]]:
    try:
        taxonomy = (
            load_taxonomy(config.taxonomy_path) if config.taxonomy_path else default_taxonomy()
        )
    except (OSError, TaxonomyError) as exc:
        raise TaxonomyError(f"{config.taxonomy_path}: {exc}") from exc
    try:
        segments = load_manifest(config.manifest_path)
        for segment in segments:
            validate_annotation(segment, taxonomy)
    except (OSError, ManifestError) as exc:
        raise ManifestError(f"{config.manifest_path}: {exc}") from exc
    # A template id naming an existing file is loaded and registered once.
    if config.template_id not in PROMPT_TEMPLATES and Path(config.template_id).is_file():
        register_template(config.template_id, load_template(config.template_id))
    return taxonomy, segments


def make_mock_config(config: ExperimentConfig) -> MockConfig:
    raw = dict(config.backend_config)
    return MockConfig(
        corruption_rate=float(raw.get("corruption_rate", 0.0)),
        synthetic_latency_ms=float(raw.get("synthetic_latency_ms", 0.0)),
        seed=int(raw.get("seed", config.seed)),
        unstructured_penalty=float(raw.get("unstructured_penalty", 0.0)),
    )


def make_backend(config: ExperimentConfig, taxonomy: Taxonomy, clock) -> Backend:
    if config.backend == "mock":
        return MockBackend(make_mock_config(config), taxonomy, clock=clock)
    raw = dict(config.backend_config)
    if "base_url" not in raw:
        raise ConfigError("remote backend needs backend_config.base_url")
    return RemoteBackend(
        base_url=raw["base_url"],
        deadline_s=float(raw.get("deadline_s", 10.0)),
        inline_b64=bool(raw.get("inline_b64", False)),
    )


def make_link_config(config: ExperimentConfig) -> LinkConfig:
    raw = dict(config.link)
    raw.setdefault("seed", config.seed)
    return LinkConfig.from_dict(raw)


@dataclass
class AlertEvent:
    origin: str
    alert: dict
    deliveries: list[dict]

    def to_dict(self) -> dict:
        return {"origin": self.origin, "alert": self.alert, "deliveries": self.deliveries}


@dataclass
class ExperimentResult:
    report: EvaluationReport
    scores: list[SegmentScore]
    timing: list[TimingRow]
    alert_events: list[AlertEvent]
    files: dict[str, Path]


def _run_one_strategy(
    config: ExperimentConfig,
    strategy: str,
    taxonomy: Taxonomy,
    segments: Sequence[Segment],
) -> tuple[list[SegmentScore], list[AlertEvent]]:
    clock = VirtualClock()
    link = make_link_config(config)
    topology = Topology(default_link=link)
    transport = SimulatedTransport(topology, clock)
    backend = make_backend(config, taxonomy, clock)

    prompt_config = PromptConfig(
        keyframe_policy=config.keyframe_policy,
        window_half_width=config.window_half_width,
    )
    node_config = NodeConfig(
        hazard_set=frozenset(config.hazard_set),
        strategy=strategy,
        prompt=prompt_config,
        template_id=config.template_id,
    )
    nodes = [
        RsuNode(f"rsu-{i + 1}", taxonomy, backend, node_config, clock)
        for i in range(config.node_count)
    ]
    for node in nodes:
        register_node(topology, node.rsu_id)
    for node in nodes:
        transport.attach(node.rsu_id, node.handle_message)
    # Announce everyone now that all handlers are attached.
    for node in nodes:
        address = topology.address_of(node.rsu_id)
        envelope = node.make_envelope("status", {"rsu_id": node.rsu_id, "address": address})
        broadcast(topology, envelope, transport)
    transport.run_until_idle()

    scores: list[SegmentScore] = []
    alert_events: list[AlertEvent] = []
    for segment in segments:
        if len(segment.frames) < config.node_count:
            raise ConfigError(
                f"segment {segment.id!r} has {len(segment.frames)} frames, "
                f"cannot split across {config.node_count} nodes"
            )
        parts = split_segment(segment, config.node_count)
        for node, part in zip(nodes, parts):
            if isinstance(backend, MockBackend):
                backend.register(part)
            alerts = node.process_segment(part)
            record = node.state.outputs[-1]
            scores.append(
                SegmentScore(
                    segment_id=part.id,
                    rsu_id=node.rsu_id,
                    backend=config.backend,
                    strategy=strategy,
                    narration=record.narration_score,
                    reasoning=record.reasoning_score,
                )
            )
            for alert in alerts:
                envelope = node.make_envelope("alert", alert.to_dict())
                report = broadcast(topology, envelope, transport)
                alert_events.append(
                    AlertEvent(
                        origin=node.rsu_id,
                        alert=alert.to_dict(),
                        deliveries=[
                            {"peer": d.peer, "delivered": d.delivered, "latency_ms": d.latency_ms}
                            for d in report.results
                        ],
                    )
                )
            transport.run_until_idle()
    return scores, alert_events


def _measure_timing(
    config: ExperimentConfig, taxonomy: Taxonomy, segments: Sequence[Segment]
) -> list[TimingRow]:
    if not config.batch_sizes or not segments:
        return []
    segment = max(segments, key=lambda s: len(s.frames))
    sizes = [b for b in config.batch_sizes if b <= len(segment.frames)]
    if not sizes:
        return []
    clock = VirtualClock()
    backend = make_backend(config, taxonomy, clock)
    if isinstance(backend, MockBackend):
        backend.register(segment)
    prompt_config = PromptConfig(
        keyframe_policy=config.keyframe_policy,
        window_half_width=config.window_half_width,
    )
    return measure_response(
        backend,
        segment,
        sizes,
        taxonomy,
        prompt_config,
        frames_per_call=config.frames_per_call,
        template_id=config.template_id,
        clock=clock,
    )


def run_experiment(config: ExperimentConfig, quiet: bool = False) -> ExperimentResult:
    """Run the full experiment and write report files under output_dir.

    Writes accuracy_report.txt/.json, timing.txt/.json, alerts.jsonl, and an
    echo of the effective config. All content is deterministic for a given
    config, because the mock backend and the simulated network run on a
    virtual clock.
    """
    taxonomy, segments = load_inputs(config)

    strategies = ["on", "off"] if config.strategy == "both" else [config.strategy]
    scores: list[SegmentScore] = []
    alert_events: list[AlertEvent] = []
    for strategy in strategies:
        s, a = _run_one_strategy(config, strategy, taxonomy, segments)
        scores.extend(s)
        alert_events.extend(a)

    report = aggregate(scores)
    timing = _measure_timing(config, taxonomy, segments)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_text = render_report_table(report)
    timing_text = render_timing_table(timing) if timing else "no timing rows\n"

    files = {
        "accuracy_txt": out_dir / "accuracy_report.txt",
        "accuracy_json": out_dir / "accuracy_report.json",
        "timing_txt": out_dir / "timing.txt",
        "timing_json": out_dir / "timing.json",
        "alerts": out_dir / "alerts.jsonl",
        "config": out_dir / "run_config.json",
    }
    files["accuracy_txt"].write_text(table_text, encoding="utf-8")
    files["accuracy_json"].write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    files["timing_txt"].write_text(timing_text, encoding="utf-8")
    files["timing_json"].write_text(
        json.dumps(timing_rows_to_dicts(timing), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    files["alerts"].write_text(
        "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in alert_events),
        encoding="utf-8",
    )
    files["config"].write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    if not quiet:
        print(table_text)
        print(timing_text)
    return ExperimentResult(
        report=report, scores=scores, timing=timing, alert_events=alert_events, files=files
    )


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """A copy of *config* with non-None overrides applied."""
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **clean) if clean else config
