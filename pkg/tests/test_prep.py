import numpy as np
import pytest

from descreg.catalog import EmbeddingSet
from descreg.prep import PATCH_SIZE, cluster_split, crop_plan


def test_patch_size_default():
    assert PATCH_SIZE == 800


def test_wide_strip_three_windows_with_fixed_overlap():
    plan = crop_plan(2000, 800)
    assert plan.count == 3
    assert [w[0] for w in plan.windows] == [0, 600, 1200]
    assert all(w[2] - w[0] == 800 for w in plan.windows)
    # Consecutive windows overlap by exactly 200 pixels.
    assert plan.windows[0][2] - plan.windows[1][0] == 200
    assert plan.windows[1][2] - plan.windows[2][0] == 200
    assert plan.windows[-1][2] == 2000
    assert not plan.padded_x and not plan.padded_y


def test_exact_fit_single_window():
    plan = crop_plan(800, 800)
    assert plan.windows == ((0, 0, 800, 800),)
    assert not plan.padded_x and not plan.padded_y


def test_small_image_padded():
    plan = crop_plan(700, 800)
    assert plan.windows == ((0, 0, 800, 800),)
    assert plan.padded_x and not plan.padded_y


def test_windows_row_major_grid():
    plan = crop_plan(900, 1000)
    xs, ys = [0, 100], [0, 200]
    expected = tuple((x, y, x + 800, y + 800) for y in ys for x in xs)
    assert plan.windows == expected


def test_crop_plan_validation():
    with pytest.raises(ValueError):
        crop_plan(0, 100)
    with pytest.raises(ValueError):
        crop_plan(100, -5)
    with pytest.raises(ValueError):
        crop_plan(100, 100, patch=0)


def _assert_full_coverage(plan):
    xcov = np.zeros(plan.width, dtype=bool)
    ycov = np.zeros(plan.height, dtype=bool)
    for x1, y1, x2, y2 in plan.windows:
        assert x2 - x1 == plan.patch and y2 - y1 == plan.patch
        assert x1 >= 0 and y1 >= 0
        if not plan.padded_x:
            assert x2 <= plan.width
        if not plan.padded_y:
            assert y2 <= plan.height
        xcov[max(x1, 0):min(x2, plan.width)] = True
        ycov[max(y1, 0):min(y2, plan.height)] = True
    assert xcov.all() and ycov.all()


def test_random_sizes_always_covered():
    rng = np.random.default_rng(7)
    for _ in range(200):
        w = int(rng.integers(100, 5001))
        h = int(rng.integers(100, 5001))
        _assert_full_coverage(crop_plan(w, h))


def _paired_embeddings():
    """Eight classes in four tight pairs, pairs far apart."""
    rng = np.random.default_rng(3)
    centers = rng.normal(size=(4, 12))
    names, rows = [], []
    for p, center in enumerate(centers):
        for m in range(2):
            names.append(f"c{p}{m}")
            rows.append(center + 0.01 * rng.normal(size=12))
    return EmbeddingSet(tuple(names), np.array(rows))


def test_cluster_split_picks_one_per_tight_pair():
    emb = _paired_embeddings()
    split = cluster_split(emb, 4, np.random.default_rng(0))
    assert split.n_unseen == 4 and split.n_seen == 4
    # Exactly one member of each planted pair goes unseen.
    for p in range(4):
        pair = {f"c{p}0", f"c{p}1"}
        assert len(pair & set(split.unseen)) == 1
    # Both groups preserve the embedding-file order.
    assert list(split.seen) == [n for n in emb.names if n in split.seen]
    assert list(split.unseen) == [n for n in emb.names if n in split.unseen]


def test_cluster_split_deterministic_per_seed():
    emb = _paired_embeddings()
    a = cluster_split(emb, 3, np.random.default_rng(11))
    b = cluster_split(emb, 3, np.random.default_rng(11))
    assert a == b
    outcomes = {
        cluster_split(emb, 3, np.random.default_rng(s)).unseen for s in range(20)
    }
    assert len(outcomes) > 1  # the rng really does pick pair members


def test_cluster_split_validation():
    emb = _paired_embeddings()
    assert cluster_split(emb, 0, np.random.default_rng(0)).unseen == ()
    with pytest.raises(ValueError):
        cluster_split(emb, -1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        cluster_split(emb, 5, np.random.default_rng(0))
