import numpy as np
import pytest

from nllr.grouping import MatchConfig, PatchBank, find_group, match_members
from nllr.patches import PatchIndex


def brute_force_group(img, exemplar, cfg):
    """Oracle: explicit distance scan, (distance, row, col) sort, exemplar hoisted."""
    side = cfg.patch_size
    n_rows = img.shape[0] - side + 1
    n_cols = img.shape[1] - side + 1
    er, ec = exemplar
    half = cfg.window // 2
    rows = range(max(er - half, 0), min(er + (cfg.window - 1) // 2, n_rows - 1) + 1)
    cols = range(max(ec - half, 0), min(ec + (cfg.window - 1) // 2, n_cols - 1) + 1)

    def vec(r, c):
        return img[r : r + side, c : c + side].ravel(order="F")

    ev = vec(er, ec)
    scored = sorted(
        (float(np.sum((vec(r, c) - ev) ** 2)), r, c) for r in rows for c in cols
    )
    sel = [(r, c) for _, r, c in scored[: cfg.group_size]]
    if (er, ec) in sel:
        sel.remove((er, ec))
    else:
        sel = sel[:-1]
    return [(er, ec)] + sel


def test_constant_image_breaks_ties_lexicographically():
    img = np.full((12, 12), 3.0)
    cfg = MatchConfig(group_size=5, window=7, patch_size=3)
    group = find_group(img, PatchIndex(5, 5), cfg)
    # window rows/cols 2..8; all distances tie, so after the exemplar come
    # the first candidates in (row, col) order
    assert group.members == [(5, 5), (2, 2), (2, 3), (2, 4), (2, 5)]
    assert group.matrix.shape == (9, 5)
    assert np.linalg.matrix_rank(group.matrix) <= 1


def test_exemplar_is_always_first_with_zero_distance(rng):
    img = rng.normal(size=(20, 20)) * 40 + 120
    cfg = MatchConfig(group_size=6, window=9, patch_size=4)
    for exemplar in [(0, 0), (7, 9), (16, 16), (0, 13)]:
        group = find_group(img, PatchIndex(*exemplar), cfg)
        assert tuple(group.members[0]) == exemplar
        np.testing.assert_array_equal(
            group.matrix[:, 0], img[exemplar[0] : exemplar[0] + 4, exemplar[1] : exemplar[1] + 4].ravel(order="F")
        )


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, size=(16, 16)).astype(float)
    cfg = MatchConfig(group_size=5, window=7, patch_size=3)
    for exemplar in [(0, 0), (3, 8), (7, 7), (13, 2), (13, 13)]:
        group = find_group(img, PatchIndex(*exemplar), cfg)
        assert [tuple(m) for m in group.members] == brute_force_group(img, exemplar, cfg)


def test_member_distances_are_non_decreasing(rng):
    img = rng.normal(size=(24, 24)) * 30 + 128
    cfg = MatchConfig(group_size=8, window=11, patch_size=4)
    group = find_group(img, PatchIndex(10, 10), cfg)
    ev = group.matrix[:, 0]
    dists = [float(np.sum((group.matrix[:, j] - ev) ** 2)) for j in range(len(group.members))]
    assert dists[0] == 0.0
    assert all(a <= b for a, b in zip(dists[1:], dists[2:]))


def test_matching_is_deterministic(rng):
    img = rng.normal(size=(18, 18))
    cfg = MatchConfig(group_size=4, window=9, patch_size=3)
    a = find_group(img, PatchIndex(8, 8), cfg)
    b = find_group(img, PatchIndex(8, 8), cfg)
    assert a.members == b.members
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_small_window_returns_all_candidates(rng):
    img = rng.normal(size=(6, 6))
    cfg = MatchConfig(group_size=50, window=3, patch_size=3)
    group = find_group(img, PatchIndex(2, 2), cfg)
    # 3x3 window on a 4x4 candidate grid holds 9 positions
    assert len(group.members) == 9


def test_match_members_is_rectangular(rng):
    img = rng.normal(size=(14, 14))
    cfg = MatchConfig(group_size=6, window=9, patch_size=3)
    bank = PatchBank(img, 3)
    exemplars = [PatchIndex(0, 0), PatchIndex(5, 5), PatchIndex(11, 11)]
    members = match_members(bank, exemplars, cfg)
    assert members.shape == (3, 6)
    for i, ex in enumerate(exemplars):
        assert bank.position(members[i, 0]) == ex


def test_match_members_rejects_starved_windows(rng):
    img = rng.normal(size=(6, 6))
    cfg = MatchConfig(group_size=50, window=3, patch_size=3)
    bank = PatchBank(img, 3)
    with pytest.raises(ValueError):
        match_members(bank, [PatchIndex(0, 0)], cfg)


def test_bank_vectors_agree_with_extraction(rng):
    from nllr.patches import extract_patch

    img = rng.normal(size=(9, 11))
    bank = PatchBank(img, 4)
    for row, col in [(0, 0), (3, 5), (5, 7)]:
        np.testing.assert_array_equal(
            bank.vectors[bank.flat(row, col)], extract_patch(img, PatchIndex(row, col), 16)
        )
