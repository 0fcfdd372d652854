"""LLM auto-labeling pipeline and PubMed passage collection."""

from .llm import CacheMiss, CachedClient, EndpointError, LlmRequest, LlmResponse, OpenAIChatClient
from .parsing import ParseError, Relevance
from .pipeline import (
    CandidateEntry,
    ConfigurationError,
    HttpEmbedder,
    PipelineConfig,
    PipelineError,
    PipelineRecord,
    PrecomputedNameVectors,
    classify_candidates,
    claims_to_candidates,
    final_dataset,
    generate_claims,
    guideline_filter,
    quality_select,
    relabel,
    run_pipeline,
    verify_stage_log,
    write_outputs,
)
from .pubmed import FetchLog, PubMedClient, PubMedError, fetch_pubmed
