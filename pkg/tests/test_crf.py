import math

import numpy as np
import pytest
import torch

from bleached import crf
from bleached.crf import B, I, O
from oracles import all_paths, brute_scores, random_potentials, valid


def test_uniform_two_steps_is_log9():
    log_z = crf.log_partition(torch.zeros(2, 3, dtype=torch.float64), torch.zeros(5, 5, dtype=torch.float64))
    assert float(log_z) == pytest.approx(math.log(9), abs=1e-15)


@pytest.mark.parametrize("seed", range(120))
def test_log_partition_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 9))
    e, t = random_potentials(rng, m)
    expected = np.logaddexp.reduce(brute_scores(e, t, all_paths(m)))
    got = float(crf.log_partition(torch.from_numpy(e), torch.from_numpy(t)))
    assert abs(got - expected) <= 1e-10 * abs(expected)


@pytest.mark.parametrize("seed", range(40))
def test_constrained_partition_matches_valid_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    m = int(rng.integers(1, 9))
    e, t = random_potentials(rng, m)
    paths = all_paths(m)
    expected = np.logaddexp.reduce(brute_scores(e, t, paths[valid(paths)]))
    masked = torch.from_numpy(t) + crf.constraint_mask()
    got = float(crf.log_partition(torch.from_numpy(e), masked))
    assert abs(got - expected) <= 1e-6 * max(1.0, abs(expected))


@pytest.mark.parametrize("seed", range(150))
def test_viterbi_matches_enumeration_with_tie_break(seed):
    rng = np.random.default_rng(2000 + seed)
    m = int(rng.integers(1, 9))
    # integer potentials make exact ties frequent
    e, t = random_potentials(rng, m, integer=seed % 2 == 0)
    paths = all_paths(m)
    paths = paths[valid(paths)]
    scores = brute_scores(e, t, paths)
    k = int(np.argmax(scores))
    tags, best = crf.viterbi(torch.from_numpy(e), torch.from_numpy(t))
    assert best == scores[k]
    assert tags == paths[k].tolist()


def test_tie_prefers_o_then_b():
    tags, score = crf.viterbi(np.zeros((3, 3)), np.zeros((5, 5)))
    assert tags == [O, O, O] and score == 0.0
    e = np.array([[0.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    # B and I tie at position 1, but I cannot open a sequence
    assert crf.viterbi(e, np.zeros((5, 5)))[0] == [B, O]


def test_strong_negative_b_i_gives_all_o():
    e = np.zeros((6, 3))
    e[:, B] = e[:, I] = -50.0
    assert crf.viterbi(e, np.zeros((5, 5)))[0] == [O] * 6


def test_emissions_favoring_span_three_four():
    e = np.zeros((6, 3))
    e[2, B] = 5.0
    e[3, I] = 5.0
    tags, _ = crf.viterbi(e, np.zeros((5, 5)))
    assert crf.tags_to_spans(tags) == [(3, 5)]
    paths = all_paths(6)
    paths = paths[valid(paths)]
    assert paths[int(np.argmax(brute_scores(e, np.zeros((5, 5)), paths)))].tolist() == tags


def test_viterbi_never_emits_invalid_bio():
    e = np.zeros((4, 3))
    e[:, I] = 100.0
    tags, _ = crf.viterbi(e, np.zeros((5, 5)))
    assert crf.is_valid_bio(tags)
    assert tags[0] == B


def test_batched_partition_and_path_score_with_padding():
    rng = np.random.default_rng(7)
    t = torch.from_numpy(rng.normal(size=(5, 5)))
    lengths = [3, 5, 1]
    e = torch.from_numpy(rng.normal(size=(3, 5, 3)))
    mask = torch.tensor([[j < n for j in range(5)] for n in lengths])
    tags = torch.from_numpy(rng.integers(0, 3, size=(3, 5)))
    batched_z = crf.log_partition(e, t, mask)
    batched_s = crf.path_score(e, t, tags, mask)
    for b, n in enumerate(lengths):
        assert float(batched_z[b]) == pytest.approx(float(crf.log_partition(e[b, :n], t)), rel=1e-12)
        single = crf.sequence_score(e[b, :n].numpy(), t.numpy(), tags[b, :n].tolist())
        assert float(batched_s[b]) == pytest.approx(single, rel=1e-12)


@pytest.mark.parametrize("tags, spans", [
    ("O O O O", []),
    ("B I O B", [(1, 3), (4, 5)]),
    ("B B B", [(1, 2), (2, 3), (3, 4)]),
    ("O B I I", [(2, 5)]),
])
def test_tags_to_spans(tags, spans):
    ids = crf.tag_ids(tags.split())
    assert crf.tags_to_spans(ids) == spans
    assert crf.spans_to_tags(spans, len(ids)) == ids


def test_invalid_bio_rejected():
    with pytest.raises(ValueError):
        crf.tags_to_spans(crf.tag_ids(["O", "I"]))
    with pytest.raises(ValueError):
        crf.spans_to_tags([(1, 3), (2, 4)], 4)
