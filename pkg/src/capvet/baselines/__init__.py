"""Comparison vetting methods: embedding-similarity filters with GMM
selection, the caption-descriptiveness classifier, the noun-modifier rule,
the closed-vocabulary caption classifier, and loss-based rejection."""

from .cap2det import Cap2DetStyleModel, cap2det_vet, train_cap2det_style
from .clip_vet import (
    default_prompts,
    global_clip_vet,
    global_scores,
    load_prompts,
    local_clip_vet,
    local_scores,
)
from .descriptiveness import DescriptivenessModel, descriptive_vet, train_descriptiveness
from .gmm import GmmSelector, fit_gmm_selector
from .large_loss import large_loss_flags, large_loss_vet
from .rules import noun_modifier_vet, reject_noun_modifier

__all__ = [
    "Cap2DetStyleModel",
    "DescriptivenessModel",
    "GmmSelector",
    "cap2det_vet",
    "default_prompts",
    "descriptive_vet",
    "fit_gmm_selector",
    "global_clip_vet",
    "global_scores",
    "large_loss_flags",
    "large_loss_vet",
    "load_prompts",
    "local_clip_vet",
    "local_scores",
    "noun_modifier_vet",
    "reject_noun_modifier",
    "train_cap2det_style",
    "train_descriptiveness",
]
