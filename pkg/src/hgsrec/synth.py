"""Seeded synthetic worlds with planted, recoverable structure.

Each generator lays out one user's records on a fixed slot grid with
strictly increasing timestamps, so a chronological holdout at one half
cuts every user at a known slot.  That makes the intended kept/held
composition (how many positives land on each side) a property of the
layout, not of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import seeds
from .data import (
    KIND_FINISH,
    KIND_LIKE,
    KIND_NONINTERACTION,
    AttributeRecord,
    Dataset,
    InteractionRecord,
    map_ratings,
)

_TS_BASE = 1_000_000
_TS_STEP = 100


def _spread_slots(count: int, total: int) -> list[int]:
    """count slot indices spread evenly over range(total)."""
    return [(t + 1) * total // (count + 1) for t in range(count)]


# ------------------------------------------------------- two planted groups


def two_group_likes(
    seed: int,
    users_per_group: int = 10,
    videos_per_group: int = 25,
    noninteractions: int = 7,
) -> Dataset:
    """Two disjoint taste groups with perfectly separable preferences.

    Every user likes every video of their own group (in a per-user random
    order) and explicitly ignores a handful of the other group's videos.
    Videos carry three attribute kinds: a per-group topic marker, tags
    cycling within the group, and audio ids shared across groups.  A
    model that recovers the group structure can rank held-out likes above
    held-out noninteractions perfectly.
    """
    if noninteractions >= videos_per_group:
        raise ValueError("noninteractions must leave the other group uncovered")
    n_videos = 2 * videos_per_group
    videos = [f"v{j:03d}" for j in range(n_videos)]
    attrs = []
    for j, vid in enumerate(videos):
        g = j // videos_per_group
        attrs.append(AttributeRecord(vid, "topic", f"g{g}"))
        attrs.append(AttributeRecord(vid, "tag", f"t{g}{j % 4}"))
        attrs.append(AttributeRecord(vid, "audio", f"a{j % 5}"))
    records: list[InteractionRecord] = []
    total = videos_per_group + noninteractions
    nonint_slots = set(_spread_slots(noninteractions, total))
    for i in range(2 * users_per_group):
        user = f"u{i:03d}"
        g = i // users_per_group
        rng = seeds.substream(seed, "user", i)
        own = [videos[g * videos_per_group + k] for k in range(videos_per_group)]
        other = [
            videos[(1 - g) * videos_per_group + k] for k in range(videos_per_group)
        ]
        liked = [own[k] for k in rng.permutation(videos_per_group)]
        ignored = [other[k] for k in rng.choice(videos_per_group, noninteractions, replace=False)]
        for slot in range(total):
            ts = _TS_BASE + slot * _TS_STEP
            if slot in nonint_slots:
                records.append(
                    InteractionRecord(user, ignored.pop(), KIND_NONINTERACTION, ts)
                )
            else:
                records.append(InteractionRecord(user, liked.pop(), KIND_LIKE, ts))
    return Dataset(records, attrs)


# ------------------------------------------- liked signal, finished noise


def confounded_finishes(
    seed: int,
    users_per_group: int = 15,
    videos_per_group: int = 20,
    likes: int = 13,
    finishes: int = 4,
    noninteractions: int = 8,
) -> Dataset:
    """Likes follow group taste; finishes are uniform noise.

    The finish records sit at each user's earliest timestamps, so a
    chronological holdout keeps them on the training side where they
    pollute the session graphs.  Telling the two interaction kinds apart
    is the only way to suppress them, which is what makes this world a
    probe for relation-aware aggregation.
    """
    if likes > videos_per_group or noninteractions > videos_per_group:
        raise ValueError("likes and noninteractions must fit inside one group")
    if finishes >= (finishes + likes + noninteractions) // 2:
        raise ValueError("finishes must fit inside the kept half")
    n_videos = 2 * videos_per_group
    videos = [f"v{j:03d}" for j in range(n_videos)]
    attrs = []
    for j, vid in enumerate(videos):
        g = j // videos_per_group
        attrs.append(AttributeRecord(vid, "tag", f"t{g}{j % 4}"))
        attrs.append(AttributeRecord(vid, "audio", f"a{j % 5}"))
    records: list[InteractionRecord] = []
    for i in range(2 * users_per_group):
        user = f"u{i:03d}"
        g = i // users_per_group
        rng = seeds.substream(seed, "user", i)
        own = videos[g * videos_per_group : (g + 1) * videos_per_group]
        other = videos[(1 - g) * videos_per_group : (2 - g) * videos_per_group]
        finished = [videos[k] for k in rng.choice(n_videos, finishes, replace=False)]
        liked = [own[k] for k in rng.choice(videos_per_group, likes, replace=False)]
        ignorable = [v for v in other if v not in finished]
        ignored = [
            ignorable[k]
            for k in rng.choice(len(ignorable), noninteractions, replace=False)
        ]
        # Finishes first, then likes and noninteractions interleaved with a
        # fixed per-half composition, so a one-half chronological cut keeps
        # every finish and a known share of each other kind.
        total = finishes + likes + noninteractions
        kept_tail = total // 2 - finishes
        nonint_kept = kept_tail * noninteractions // (likes + noninteractions)
        segments = [
            [KIND_LIKE] * (kept_tail - nonint_kept)
            + [KIND_NONINTERACTION] * nonint_kept,
            [KIND_LIKE] * (likes - kept_tail + nonint_kept)
            + [KIND_NONINTERACTION] * (noninteractions - nonint_kept),
        ]
        kinds = [KIND_FINISH] * finishes
        for seg in segments:
            kinds.extend(seg[k] for k in rng.permutation(len(seg)))
        for slot, kind in enumerate(kinds):
            ts = _TS_BASE + slot * _TS_STEP
            if kind == KIND_FINISH:
                records.append(InteractionRecord(user, finished.pop(), kind, ts))
            elif kind == KIND_LIKE:
                records.append(InteractionRecord(user, liked.pop(), kind, ts))
            else:
                records.append(InteractionRecord(user, ignored.pop(), kind, ts))
    return Dataset(records, attrs)


# ------------------------------------------------------ rated group worlds


@dataclass(frozen=True)
class RatingWorld:
    """Star ratings plus attributes, before threshold mapping."""

    ratings: list[tuple[str, str, int, int]]
    attributes: list[AttributeRecord]
    group_of_user: dict[str, int]
    group_of_video: dict[str, int]
    hot_videos: frozenset[str]

    def dataset(self, threshold: int = 4) -> Dataset:
        return Dataset(map_ratings(self.ratings, threshold), self.attributes)

    def write_csv(self, ratings_path: str, attributes_path: str) -> None:
        with open(ratings_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("user_id,video_id,rating,timestamp\n")
            for user, video, stars, ts in self.ratings:
                fh.write(f"{user},{video},{stars},{ts}\n")
        with open(attributes_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("video_id,attr_type,attr_id\n")
            for a in sorted(self.attributes, key=lambda a: (a.video_id, a.attr_type, a.attr_id)):
                fh.write(f"{a.video_id},{a.attr_type},{a.attr_id}\n")


def rating_groups(
    seed: int,
    users: int = 1000,
    groups: int = 4,
    videos_per_group: int = 50,
    fives_per_half: int = 7,
    lows_per_half: int = 13,
    hot_bias: float = 0.8,
) -> RatingWorld:
    """Group-structured star ratings with popularity-confounded negatives.

    Users rate their own group's videos five stars, with the picks biased
    toward the group's "hot" half so those videos rack up likes.  Their
    low ratings (one to three stars) land on *other* groups' hot videos,
    so after threshold mapping the explicit negatives are exactly the
    globally popular items: a popularity ranker promotes them, a model
    that learns the groups demotes them.  A single four-star rating per
    user exercises the dropped-as-ambiguous rule.
    """
    if users % groups != 0:
        raise ValueError("users must divide evenly into groups")
    if 2 * fives_per_half + 1 > videos_per_group:
        raise ValueError("not enough in-group videos for the five-star picks")
    per_group = users // groups
    n_videos = groups * videos_per_group
    videos = [f"v{j:03d}" for j in range(n_videos)]
    hot_half = videos_per_group // 2
    hot = frozenset(
        videos[g * videos_per_group + k]
        for g in range(groups)
        for k in range(hot_half)
    )
    attrs = []
    group_of_video = {}
    for j, vid in enumerate(videos):
        g = j // videos_per_group
        group_of_video[vid] = g
        attrs.append(AttributeRecord(vid, "genre", f"genre{g}_{j % 5}"))
        attrs.append(AttributeRecord(vid, "era", f"e{j % 7}"))

    def _biased(rng, pool_groups: list[int], count: int) -> list[str]:
        pool = [
            videos[g * videos_per_group + k]
            for g in pool_groups
            for k in range(videos_per_group)
        ]
        hot_n = sum(1 for v in pool if v in hot)
        cold_n = len(pool) - hot_n
        weights = [
            hot_bias / hot_n if v in hot else (1.0 - hot_bias) / cold_n
            for v in pool
        ]
        picks = rng.choice(len(pool), size=count, replace=False, p=weights)
        return [pool[k] for k in picks]

    ratings: list[tuple[str, str, int, int]] = []
    group_of_user = {}
    fives_total = 2 * fives_per_half
    lows_total = 2 * lows_per_half
    for i in range(users):
        user = f"u{i:04d}"
        g = i // per_group
        group_of_user[user] = g
        rng = seeds.substream(seed, "user", i)
        own_picks = _biased(rng, [g], fives_total + 1)
        fives, four = own_picks[:fives_total], own_picks[fives_total]
        lows = _biased(rng, [h for h in range(groups) if h != g], lows_total)
        low_stars = [int(s) for s in rng.integers(1, 4, size=lows_total)]
        halves = [
            [(v, 5) for v in fives[:fives_per_half]]
            + list(zip(lows[:lows_per_half], low_stars[:lows_per_half]))
            + [(four, 4)],
            [(v, 5) for v in fives[fives_per_half:]]
            + list(zip(lows[lows_per_half:], low_stars[lows_per_half:])),
        ]
        slot = 0
        for half in halves:
            for k in rng.permutation(len(half)):
                video, stars = half[k]
                ratings.append((user, video, stars, _TS_BASE + slot * _TS_STEP))
                slot += 1
    return RatingWorld(
        ratings=ratings,
        attributes=attrs,
        group_of_user=group_of_user,
        group_of_video=group_of_video,
        hot_videos=hot,
    )
