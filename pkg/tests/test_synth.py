"""Structure checks for the planted synthetic worlds."""

import math

import pytest

from hgsrec import synth
from hgsrec.data import (
    KIND_FINISH,
    KIND_LIKE,
    KIND_NONINTERACTION,
    POSITIVE_KINDS,
    Dataset,
    convert_ratings_csv,
    read_interactions,
)


def halves(ds, user, fraction=0.5):
    recs = ds.records[user]
    cut = math.floor(len(recs) * (1 - fraction))
    return recs[:cut], recs[cut:]


def test_two_group_likes_shape_and_determinism():
    ds = synth.two_group_likes(11)
    assert len(ds.users) == 20
    assert len(ds.videos) == 50
    assert ds.attr_types == ["audio", "tag", "topic"]
    again = synth.two_group_likes(11)
    assert ds.interactions == again.interactions
    other = synth.two_group_likes(12)
    assert ds.interactions != other.interactions


def test_two_group_likes_group_alignment():
    ds = synth.two_group_likes(7)
    for i, user in enumerate(ds.users):
        own = set(range(25)) if i < 10 else set(range(25, 50))
        for r in ds.records[user]:
            vid_index = int(r.video_id[1:])
            if r.kind == KIND_LIKE:
                assert vid_index in own
            else:
                assert r.kind == KIND_NONINTERACTION
                assert vid_index not in own
    # each group's videos collect one like from each of its ten members
    assert set(ds.positive_count.values()) == {10}


def test_two_group_likes_halves_composition():
    ds = synth.two_group_likes(3)
    for user in ds.users:
        kept, held = halves(ds, user)
        assert sum(r.kind in POSITIVE_KINDS for r in kept) == 13
        assert sum(r.kind in POSITIVE_KINDS for r in held) == 12
        assert sum(r.kind == KIND_NONINTERACTION for r in held) == 4


def test_confounded_finishes_layout():
    ds = synth.confounded_finishes(5)
    assert len(ds.users) == 30
    for i, user in enumerate(ds.users):
        recs = ds.records[user]
        assert [r.kind for r in recs[:4]] == [KIND_FINISH] * 4
        kept, held = halves(ds, user)
        assert all(r.kind != KIND_FINISH for r in held)
        assert sum(r.kind == KIND_LIKE for r in held) == 8
        assert sum(r.kind == KIND_NONINTERACTION for r in held) == 5
        own = set(range(20)) if i < 15 else set(range(20, 40))
        for r in recs:
            vid_index = int(r.video_id[1:])
            if r.kind == KIND_LIKE:
                assert vid_index in own
            elif r.kind == KIND_NONINTERACTION:
                assert vid_index not in own


def test_confounded_finishes_finish_targets_are_unconstrained():
    ds = synth.confounded_finishes(5)
    targets = {
        int(r.video_id[1:]) < 20
        for u in ds.users
        for r in ds.records[u]
        if r.kind == KIND_FINISH
    }
    # uniform picks over both halves of the video range
    assert targets == {True, False}


def test_rating_groups_mapping_counts():
    world = synth.rating_groups(3, users=40, groups=4, videos_per_group=20,
                                fives_per_half=4, lows_per_half=6)
    assert sorted({s for _, _, s, _ in world.ratings}) == [1, 2, 3, 4, 5]
    ds = world.dataset()
    for user in ds.users:
        recs = ds.records[user]
        assert len(recs) == 20  # the four-star rating is dropped
        assert sum(r.kind == KIND_LIKE for r in recs) == 8
        assert sum(r.kind == KIND_NONINTERACTION for r in recs) == 12


def test_rating_groups_negatives_are_out_of_group_and_hot_biased():
    world = synth.rating_groups(9, users=40, groups=4, videos_per_group=20,
                                fives_per_half=4, lows_per_half=6)
    ds = world.dataset()
    hot_negs = cold_negs = 0
    for user in ds.users:
        g = world.group_of_user[user]
        for r in ds.records[user]:
            if r.kind == KIND_LIKE:
                assert world.group_of_video[r.video_id] == g
            else:
                assert world.group_of_video[r.video_id] != g
                if r.video_id in world.hot_videos:
                    hot_negs += 1
                else:
                    cold_negs += 1
    assert hot_negs > 2 * cold_negs
    hot_likes = sum(
        c for v, c in ds.positive_count.items() if v in world.hot_videos
    )
    cold_likes = sum(
        c for v, c in ds.positive_count.items() if v not in world.hot_videos
    )
    assert hot_likes > 2 * cold_likes


def test_rating_groups_csv_round_trip_matches_in_memory(tmp_path):
    world = synth.rating_groups(6, users=12, groups=4, videos_per_group=20,
                                fives_per_half=4, lows_per_half=6)
    ratings_csv = tmp_path / "ratings.csv"
    attrs_csv = tmp_path / "attributes.csv"
    world.write_csv(str(ratings_csv), str(attrs_csv))
    converted = tmp_path / "interactions.csv"
    n = convert_ratings_csv(str(ratings_csv), str(converted), threshold=4)
    records = read_interactions(str(converted))
    direct = world.dataset(threshold=4)
    assert Dataset(records).interactions == direct.interactions
    assert n == len(direct.interactions)


def test_rating_groups_validates_arguments():
    with pytest.raises(ValueError):
        synth.rating_groups(0, users=10, groups=4)
    with pytest.raises(ValueError):
        synth.rating_groups(0, users=8, groups=4, videos_per_group=10,
                            fives_per_half=5, lows_per_half=2)
