"""Multimodal instruction-data selection."""

from ._core import (
    Error,
    PcaModel,
    SelectorModel,
    aggregate_judgments,
    allocate,
    clip_score,
    curate_scored,
    init_selector,
    kmeans_pp,
    length_score,
    load_selector,
    parse_gpt_reply,
    pca_fit,
    render_gpt_prompt,
    run_cli,
    select_topk,
    spectral_cluster,
    synthesize,
    train_selector,
)

__all__ = [
    "Error",
    "PcaModel",
    "SelectorModel",
    "aggregate_judgments",
    "allocate",
    "clip_score",
    "curate_scored",
    "init_selector",
    "kmeans_pp",
    "length_score",
    "load_selector",
    "parse_gpt_reply",
    "pca_fit",
    "render_gpt_prompt",
    "run_cli",
    "select_topk",
    "spectral_cluster",
    "synthesize",
    "train_selector",
]
