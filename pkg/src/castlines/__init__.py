"""Character-aware subtitling engine.

Mines high-confidence audio exemplars from audio-visual cues, assigns a
character name to every speech segment through a cascaded classifier
with local-context and language-model fallbacks, and scores the result
with diarisation and recognition metrics.
"""

from .core import (
    Assignment,
    CastList,
    Character,
    PipelineConfig,
    Provenance,
    SegmentRecord,
    SpeakerEmbedding,
    TimeInterval,
    VisualPeak,
    VisualSpeakerObservation,
    WordToken,
    cosine_distance,
    interval_overlap,
)
from .errors import CastlinesError, MetricError, OracleError, ParseError, ValidationError
from .exemplars import (
    ClipCategory,
    Exemplar,
    VisibleCandidates,
    audio_purity_filter,
    build_exemplars,
    categorize_clips,
    gate_visual_identity,
    select_exemplar_candidates,
)
from .assigner import (
    Stage2Result,
    assign_overlap,
    build_llm_query,
    classify_against_exemplars,
    local_context_classify,
    resolve_unknown_with_llm,
    run_stage2,
    split_on_silence,
)
from .io import EpisodeBundle, ReferenceAnnotation, ReferenceEntry, load_bundles
from .metrics import (
    CurvePoint,
    DiarisationScore,
    RecognitionReport,
    compute_cder,
    compute_der,
    precision_pocs_sweep,
    recognition_report,
)
from .oracle import (
    HttpChatOracle,
    LlmPrompt,
    LlmQuery,
    LlmVerdict,
    ScriptedStubOracle,
    build_llm_prompt,
)

__version__ = "0.1.0"
