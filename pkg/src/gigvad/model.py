"""The composed per-video forward pass shared by training and inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .gig import (FeatureMaps, HeadParams, VideoLabels, enhance,
                  global_pattern, video_level_loss, video_overall_score)
from .losses import (LossBreakdown, multiclass_loss, segment_overall_loss,
                     sparsity_loss, total_loss)
from .spatial import (ConsensusScore, consensus, relation_scores,
                      segment_patterns, segment_scores)
from .tensor import Tensor


@dataclass
class HeadOutputs:
    """Every intermediate of one video's pass through the detection head."""

    pattern: Tensor            # (d,) global pattern vector
    enhanced: FeatureMaps      # gated feature block
    relevance: Tensor          # (T, w, h) cosine relevance map
    patterns: Tensor           # (T, d) per-segment pattern vectors
    scores: Tensor             # (T, 1+C) per-segment class probabilities
    consensus: ConsensusScore  # per-class top-p consensus
    video_score: Tensor        # scalar overall score from the pattern head


def run_head(feats: FeatureMaps, params: HeadParams, top_k: int, top_p: int,
             dropout_rate: float = 0.0, training: bool = False,
             rng: np.random.Generator | None = None) -> HeadOutputs:
    """Forward pass: pattern mining, attention, spatial reasoning, consensus.

    Dropout (training only) hits the two head inputs: the pattern vector
    before the video head, and the segment pattern vectors before the segment
    head. The raw pattern vector still drives attention and relevance.
    """
    pattern = global_pattern(feats)
    enhanced = enhance(feats, pattern)
    pattern_in = ops.dropout(pattern, dropout_rate, training, rng)
    video_score = video_overall_score(pattern_in, params)
    relevance = relation_scores(pattern, enhanced)
    patterns = segment_patterns(enhanced, relevance, top_k)
    scores = segment_scores(patterns, params, dropout_rate, training, rng)
    cons = consensus(scores, top_p)
    return HeadOutputs(pattern=pattern, enhanced=enhanced, relevance=relevance,
                       patterns=patterns, scores=scores, consensus=cons,
                       video_score=video_score)


def video_loss(feats: FeatureMaps, params: HeadParams, labels: VideoLabels,
               top_k: int, top_p: int,
               weights: tuple[float, float, float],
               dropout_rate: float = 0.0, training: bool = False,
               rng: np.random.Generator | None = None,
               ) -> tuple[Tensor, LossBreakdown]:
    """All four supervision terms for one video, combined in-graph."""
    out = run_head(feats, params, top_k, top_p, dropout_rate, training, rng)
    flag = labels.any_anomaly
    return total_loss(
        multiclass=multiclass_loss(out.consensus, labels),
        segment_overall=segment_overall_loss(out.consensus, flag),
        video_overall=video_level_loss(out.video_score, flag),
        sparsity=sparsity_loss(out.scores),
        weights=weights,
    )
