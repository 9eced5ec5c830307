"""Corpus synthesis, campaign execution, traces and transformation profiling."""

from divers.harness.campaign import (
    ROW_COLUMNS,
    CampaignConfig,
    CampaignConfigError,
    CampaignOutput,
    CampaignRow,
    read_rows,
    run_campaign,
    summarize,
    write_rows,
)
from divers.harness.corpus import (
    CorpusFile,
    PlantPlan,
    build_module,
    read_corpus,
    read_manifest,
    synthesize_corpus,
    write_corpus,
)
from divers.harness.profile import (
    EmptySelection,
    ProfileReport,
    profile_traces,
    profile_transformations,
)
from divers.harness.traces import emit_progress_csv, progress_csv_text, read_trace, trace_filename

__all__ = [
    "ROW_COLUMNS", "CampaignConfig", "CampaignConfigError", "CampaignOutput", "CampaignRow",
    "read_rows", "run_campaign", "summarize", "write_rows",
    "CorpusFile", "PlantPlan", "build_module", "read_corpus", "read_manifest",
    "synthesize_corpus", "write_corpus",
    "EmptySelection", "ProfileReport", "profile_traces", "profile_transformations",
    "emit_progress_csv", "progress_csv_text", "read_trace", "trace_filename",
]
