"""Concept-guided saliency training: superpixels, concept masks, Grad-CAM and guided training."""

from ._gfsr import (
    Network,
    bce,
    classification_loss,
    enforce_connectivity,
    fit_concepts,
    generate_bias_dataset,
    load_image,
    metrics,
    perturb,
    pool_mask,
    relevance_loss,
    relevance_mask,
    roc_auc,
    run_cli,
    saliency_alignment,
    save_image,
    score_concepts,
    slic,
)

__all__ = [
    "Network",
    "bce",
    "classification_loss",
    "enforce_connectivity",
    "fit_concepts",
    "generate_bias_dataset",
    "load_image",
    "metrics",
    "perturb",
    "pool_mask",
    "relevance_loss",
    "relevance_mask",
    "roc_auc",
    "run_cli",
    "saliency_alignment",
    "save_image",
    "score_concepts",
    "slic",
]
