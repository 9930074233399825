# SPDX-License-Identifier: Apache-2.0
"""Diffusion-driven prompt tuning lab."""

from ._ddpt import (
    CompatibilityError,
    ConfigError,
    CorruptionError,
    DegenerateInputError,
    DimensionError,
    Error,
    IngestionError,
    ModelContractError,
    NoiseSchedule,
    ParseError,
    TimestepError,
    TrainingError,
    UsageError,
    bleu4,
    chrf,
    codebleu,
    config_keys,
    cosine,
    detokenize,
    evaluate,
    forward_perturb,
    linear_schedule,
    meteor,
    metric_names,
    parse_mini,
    posterior_step,
    rouge_l,
    run_cli,
    run_experiment,
    sample_chain,
    subtree_signatures,
    tokenize,
    top_k_nearest,
)

__all__ = [name for name in dir() if not name.startswith("_")]
