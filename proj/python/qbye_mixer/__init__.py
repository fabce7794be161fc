# Copyright 2026 qbye-mixer contributors
#
# Licensed under the Apache License, Version 2.0

"""Query-by-example keyword spotting: MFCC frontend, MLP-mixer encoder,
cosine-distance matching and FRR-at-FA evaluation."""

from ._core import (
    FingerprintMismatchError,
    Model,
    Profile,
    cmvn,
    cosine_distance,
    count_macs,
    count_params,
    detect,
    enroll,
    features,
    frr_at_fa,
    generate_synthetic_dataset,
    load_wav,
    match_score,
    mfcc,
    save_wav,
    sweep_roc,
    train,
)

__all__ = [
    "FingerprintMismatchError",
    "Model",
    "Profile",
    "cmvn",
    "cosine_distance",
    "count_macs",
    "count_params",
    "detect",
    "enroll",
    "features",
    "frr_at_fa",
    "generate_synthetic_dataset",
    "load_wav",
    "match_score",
    "mfcc",
    "save_wav",
    "sweep_roc",
    "train",
]
