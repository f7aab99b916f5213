"""Toolkit for extracting object labels from captions, vetting them for visual
presence, and training weakly-supervised detectors on the vetted labels."""

__version__ = "0.1.0"

VETTING_METHODS = (
    "none",
    "veil",
    "global_clip",
    "global_clip_e",
    "local_clip",
    "local_clip_e",
    "accept_descriptive",
    "reject_noun_mod",
    "cap2det",
    "large_loss",
    "oracle",
)
