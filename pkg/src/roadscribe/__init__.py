"""Distributed roadside-unit driving-behavior narration framework."""

from .taxonomy import (
    KeywordEntry,
    Taxonomy,
    TaxonomyError,
    default_taxonomy,
    load_taxonomy,
    match_keywords,
)
from .segments import (
    AnnotationItem,
    CausalStatement,
    FrameRecord,
    ManifestError,
    Segment,
    SegmentAnnotation,
    load_manifest,
    select_keyframes,
    split_segment,
)
from .prompting import (
    EnrichmentPair,
    PromptBundle,
    PromptConfig,
    build_prompt,
    generate_enrichment_corpus,
    render_prompt,
)
from .backend import (
    Backend,
    BackendError,
    BackendRequest,
    BackendResponse,
    MockBackend,
    MockConfig,
    NullBackend,
    RemoteBackend,
    measure_response,
    mock_infer,
)
from .evaluation import (
    NarrationScore,
    ReasoningScore,
    aggregate,
    extract_causal_statements,
    score_narration,
    validate_reasoning,
)
from .node import Alert, NodeConfig, Observation, RsuNode, detect_hazard
from .network import (
    Envelope,
    LinkConfig,
    SimulatedTransport,
    SocketTransport,
    Topology,
    broadcast,
    deliver_simulated,
    register_node,
)
from .orchestrator import ExperimentConfig, run_experiment

__version__ = "0.1.0"
