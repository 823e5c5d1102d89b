import numpy as np
import pytest

from hetsed.core import (
    ClassOrigin,
    ClipMetadata,
    Event,
    MaskMode,
    Origin,
    Posteriorgram,
    build_vocabulary,
    canonicalize_events,
    class_mask,
    default_vocabulary,
)

DESED10 = [
    "alarm_bell_ringing", "blender", "cat", "dishes", "dog",
    "electric_shaver_toothbrush", "frying", "running_water", "speech", "vacuum_cleaner",
]
MAESTRO11 = [
    "birds_singing", "car", "people_talking", "footsteps", "children_voices",
    "wind_blowing", "brakes_squeaking", "large_vehicle", "cutlery_and_dishes",
    "metro_approaching", "metro_leaving",
]
CROSS = [
    ("speech", "people_talking"),
    ("speech", "children_voices"),
    ("dishes", "cutlery_and_dishes"),
]


def meta(origin, clip_id="c0"):
    return ClipMetadata(clip_id=clip_id, origin=origin, duration=10.0)


def test_build_vocabulary_21_classes_desed_first():
    vocab = build_vocabulary(DESED10, MAESTRO11, CROSS)
    assert len(vocab) == 21
    assert vocab.origins[:10] == (ClassOrigin.DESED,) * 10
    assert vocab.origins[10:] == (ClassOrigin.MAESTRO,) * 11
    # alphabetical within each family keeps indices stable
    assert list(vocab.classes[:10]) == sorted(DESED10)
    assert list(vocab.classes[10:]) == sorted(MAESTRO11)
    assert vocab.cross_map["speech"] == frozenset({"people_talking", "children_voices"})


def test_build_vocabulary_trivial_two_classes():
    vocab = build_vocabulary(["a"], ["b"])
    assert len(vocab) == 2
    assert vocab.cross_map == {}


def test_build_vocabulary_rejects_reversed_mapping():
    with pytest.raises(ValueError, match="not a DESED class"):
        build_vocabulary(["a"], ["b"], [("b", "a")])


def test_build_vocabulary_rejects_unknown_target():
    with pytest.raises(ValueError, match="not a MAESTRO class"):
        build_vocabulary(["a"], ["b"], [("a", "zzz")])


def test_build_vocabulary_rejects_duplicates():
    with pytest.raises(ValueError, match="duplicate"):
        build_vocabulary(["a", "b"], ["b"])
    with pytest.raises(ValueError, match="non-empty"):
        build_vocabulary([], ["b"])


def test_default_vocabulary_drops_unevaluated_targets():
    vocab = default_vocabulary()
    assert len(vocab) == 21
    assert "dog_bark" not in vocab.classes
    assert "announcements" not in vocab.classes
    assert "dog" not in vocab.cross_map  # its only target is unevaluated
    assert vocab.cross_map["dishes"] == frozenset({"cutlery_and_dishes"})


def test_independent_mask_maestro_covers_maestro_only():
    vocab = build_vocabulary(DESED10, MAESTRO11, CROSS)
    mask = class_mask(meta(Origin.MAESTRO), vocab, MaskMode.INDEPENDENT)
    assert mask.sum() == 11
    assert not mask[:10].any() and mask[10:].all()


def test_baseline_mask_maestro_adds_super_classes():
    vocab = build_vocabulary(DESED10, MAESTRO11, CROSS)
    mask = class_mask(meta(Origin.MAESTRO), vocab, MaskMode.BASELINE)
    extras = {vocab.classes[i] for i in np.flatnonzero(mask[:10])}
    assert extras == {"speech", "dishes"}
    assert mask[10:].all()


def test_independent_mask_desed_weak():
    vocab = build_vocabulary(DESED10, MAESTRO11, CROSS)
    mask = class_mask(meta(Origin.DESED_WEAK), vocab, MaskMode.INDEPENDENT)
    assert mask[:10].all() and not mask[10:].any()


def test_mask_inclusion_and_partition_properties():
    vocab = build_vocabulary(DESED10, MAESTRO11, CROSS)
    for origin in Origin:
        ind = class_mask(meta(origin), vocab, MaskMode.INDEPENDENT)
        base = class_mask(meta(origin), vocab, MaskMode.BASELINE)
        assert not np.any(ind & ~base), f"independent not within baseline for {origin}"
    desed = class_mask(meta(Origin.DESED_STRONG), vocab, MaskMode.INDEPENDENT)
    maestro = class_mask(meta(Origin.MAESTRO), vocab, MaskMode.INDEPENDENT)
    assert not np.any(desed & maestro)
    assert np.all(desed | maestro)


def test_canonicalize_empty_and_sorting():
    assert canonicalize_events([]) == []
    e1 = Event("b", 0, 1.0, 2.0)
    e2 = Event("a", 1, 0.0, 1.0)
    e3 = Event("a", 0, 3.0, 4.0)
    out = canonicalize_events([e1, e2, e3])
    assert out == [e3, e2, e1]


def test_canonicalize_idempotent():
    rng = np.random.default_rng(7)
    events = [
        Event(f"c{rng.integers(3)}", int(rng.integers(4)), float(o), float(o) + 1.0)
        for o in rng.uniform(0, 9, size=25)
    ]
    once = canonicalize_events(events)
    assert canonicalize_events(once) == once


def test_canonicalize_reports_degenerate_interval_with_index():
    events = [Event("a", 0, 0.0, 1.0), Event("a", 0, 2.0, 2.0)]
    with pytest.raises(ValueError, match="event 1"):
        canonicalize_events(events)


def test_canonicalize_aggregates_all_problems():
    events = [Event("a", 0, 3.0, 2.0), Event("b", -1, 0.0, 1.0)]
    with pytest.raises(ValueError) as err:
        canonicalize_events(events)
    assert "event 0" in str(err.value) and "event 1" in str(err.value)


def test_posteriorgram_validation():
    Posteriorgram(np.zeros((3, 2)), 0.02, "x")
    with pytest.raises(ValueError):
        Posteriorgram(np.zeros((3, 2)) - 0.1, 0.02, "x")
    with pytest.raises(ValueError):
        Posteriorgram(np.zeros((3, 2)), -1.0, "x")
    with pytest.raises(ValueError):
        Posteriorgram(np.zeros((0, 2)), 0.02, "x")


def test_clip_metadata_validation():
    with pytest.raises(ValueError):
        ClipMetadata("x", Origin.MAESTRO, 0.0)
