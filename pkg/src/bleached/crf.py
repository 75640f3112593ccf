"""Linear-chain CRF over BIO tags.

Tags are indexed ``O=0, B=1, I=2``; the transition matrix is 5x5 with two
synthetic states ``START=3`` and ``STOP=4``. The log-potential of step ``j``
is ``transitions[y_{j-1}, y_j] + emissions[j, y_j]`` with ``y_0 = START``, and
the sequence score adds ``transitions[y_m, STOP]``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

TAGS = ("O", "B", "I")
O, B, I = 0, 1, 2
START, STOP = 3, 4
NUM_TAGS = 3
NUM_STATES = 5

# additive surrogate for forbidden moves into I
FORBIDDEN = -1e4


def constraint_mask(dtype=torch.float64) -> torch.Tensor:
    mask = torch.zeros(NUM_STATES, NUM_STATES, dtype=dtype)
    mask[O, I] = FORBIDDEN
    mask[START, I] = FORBIDDEN
    return mask


def is_valid_bio(tags: Sequence[int]) -> bool:
    prev = START
    for y in tags:
        if y == I and prev in (O, START):
            return False
        prev = y
    return True


def log_partition(emissions: torch.Tensor, transitions: torch.Tensor, mask: torch.Tensor | None = None):
    """Forward recursion. ``emissions`` is (m, 3) or (B, m, 3); returns log Z per sequence."""
    single = emissions.dim() == 2
    if single:
        emissions = emissions[None]
    batch, m, _ = emissions.shape
    if mask is None:
        mask = torch.ones(batch, m, dtype=torch.bool)
    trans = transitions[:NUM_TAGS, :NUM_TAGS]
    alpha = transitions[START, :NUM_TAGS] + emissions[:, 0]
    for j in range(1, m):
        step = torch.logsumexp(alpha[:, :, None] + trans[None], dim=1) + emissions[:, j]
        alpha = torch.where(mask[:, j, None], step, alpha)
    log_z = torch.logsumexp(alpha + transitions[:NUM_TAGS, STOP], dim=1)
    return log_z[0] if single else log_z


def path_score(emissions: torch.Tensor, transitions: torch.Tensor, tags: torch.Tensor, mask: torch.Tensor | None = None):
    """Score of given tag sequences, differentiable. Shapes as in :func:`log_partition`."""
    single = emissions.dim() == 2
    if single:
        emissions, tags = emissions[None], tags[None]
    batch, m, _ = emissions.shape
    if mask is None:
        mask = torch.ones(batch, m, dtype=torch.bool)
    tags = tags.masked_fill(~mask, O)
    emit = emissions.gather(2, tags[..., None])[..., 0] * mask
    prev = torch.cat([torch.full((batch, 1), START, dtype=torch.long), tags[:, :-1]], dim=1)
    trans = transitions[prev, tags] * mask
    lengths = mask.sum(1)
    last = tags.gather(1, (lengths - 1)[:, None])[:, 0]
    score = emit.sum(1) + trans.sum(1) + transitions[last, STOP]
    return score[0] if single else score


def sequence_score(emissions: np.ndarray, transitions: np.ndarray, tags: Sequence[int]) -> float:
    """Left-to-right float64 accumulation of one path's score."""
    total = 0.0
    prev = START
    for j, y in enumerate(tags):
        total = total + float(transitions[prev, y]) + float(emissions[j, y])
        prev = y
    return total + float(transitions[prev, STOP])


def viterbi(emissions, transitions) -> tuple[list[int], float]:
    """Best BIO-valid tag sequence and its score.

    Ties go to the sequence that is smallest at the first differing position
    under the order O < B < I. Invalid transitions are excluded outright.
    """
    e = np.asarray(torch.as_tensor(emissions).detach().cpu().double().numpy())
    t = np.asarray(torch.as_tensor(transitions).detach().cpu().double().numpy())
    m = e.shape[0]
    if m == 0:
        return [], float(t[START, STOP])
    allowed = np.zeros((NUM_STATES, NUM_STATES))
    allowed[O, I] = allowed[START, I] = -np.inf
    trans = t + allowed
    # best[j, y]: best completion score of positions j+1.. given tag y at j
    best = np.empty((m, NUM_TAGS))
    best[m - 1] = trans[:NUM_TAGS, STOP]
    for j in range(m - 2, -1, -1):
        best[j] = np.max(trans[:NUM_TAGS, :NUM_TAGS] + (e[j + 1] + best[j + 1])[None, :], axis=1)
    tags: list[int] = []
    prev = START
    for j in range(m):
        cand = trans[prev, :NUM_TAGS] + e[j] + best[j]
        y = int(np.argmax(cand))  # first maximum, i.e. O before B before I
        tags.append(y)
        prev = y
    return tags, sequence_score(e, t, tags)


def tags_to_spans(tags: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal ``B I*`` runs as 1-based half-open spans."""
    if not is_valid_bio(tags):
        raise ValueError(f"invalid BIO sequence {tag_names(tags)}")
    spans = []
    start = None
    for j, y in enumerate(tags, start=1):
        if y == B or y == O:
            if start is not None:
                spans.append((start, j))
                start = None
            if y == B:
                start = j
    if start is not None:
        spans.append((start, len(tags) + 1))
    return spans


def spans_to_tags(spans, m: int) -> list[int]:
    tags = [O] * m
    for start, end in sorted(spans):
        if not (1 <= start < end <= m + 1):
            raise ValueError(f"span {(start, end)} outside sequence of length {m}")
        if any(tags[k - 1] != O for k in range(start, end)):
            raise ValueError(f"span {(start, end)} overlaps another span")
        tags[start - 1] = B
        for k in range(start + 1, end):
            tags[k - 1] = I
    return tags


def tag_names(tags: Sequence[int]) -> list[str]:
    return [TAGS[y] for y in tags]


def tag_ids(names: Sequence[str]) -> list[int]:
    return [TAGS.index(n) for n in names]
