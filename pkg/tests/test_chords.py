from __future__ import annotations

import random

import pytest

from midisync.chords import (
    ChordLabelError,
    ChordSpan,
    beat_duration_ms,
    boost_chord_velocity,
    detect_chords,
    dropout_chords,
    format_spans,
    insert_chord_tokens,
    parse_spans,
)
from midisync.midi_codec import NoteEvent, ScoreTimeline, encode_events
from midisync.tokens import CHORD, Instrument, Token, TokenKind


def triad(instrument, pitches, onset, duration, velocity=80):
    return [
        NoteEvent(instrument, p, onset, onset + duration, velocity) for p in pitches
    ]


def test_beat_duration():
    assert beat_duration_ms(120.0) == 500.0
    assert beat_duration_ms(60.0) == 1000.0
    with pytest.raises(ValueError):
        beat_duration_ms(0)


def test_detect_qualifying_piano_chord():
    # 120 BPM: two beats = 1000 ms; these notes last exactly 1000 ms
    score = ScoreTimeline(notes=triad(Instrument.PIANO, (60, 64, 67), 0, 1000))
    spans = detect_chords(score)
    assert len(spans) == 1
    assert spans[0].instrument is Instrument.PIANO
    assert spans[0].onset_ms == 0
    assert spans[0].pitches == (60, 64, 67)


def test_detect_rejects_short_and_small():
    short = ScoreTimeline(notes=triad(Instrument.PIANO, (60, 64, 67), 0, 999))
    assert detect_chords(short) == []
    dyad = ScoreTimeline(notes=triad(Instrument.PIANO, (60, 64), 0, 2000))
    assert detect_chords(dyad) == []
    # one short member disqualifies the whole cluster
    mixed = ScoreTimeline(
        notes=triad(Instrument.PIANO, (60, 64), 0, 2000)
        + triad(Instrument.PIANO, (67,), 0, 400)
    )
    assert detect_chords(mixed) == []


def test_detect_ignores_non_chordable_instruments():
    strings = ScoreTimeline(notes=triad(Instrument.STRINGS, (60, 64, 67), 0, 2000))
    assert detect_chords(strings) == []
    bass = ScoreTimeline(notes=triad(Instrument.BASS, (40, 43, 47), 0, 2000))
    assert detect_chords(bass) == []
    drums = ScoreTimeline(notes=triad(Instrument.DRUMS, (36, 38, 42), 0, 2000))
    assert detect_chords(drums) == []


def test_detect_simultaneity_window():
    # onsets within 8 ms cluster together; 9 ms breaks the cluster
    inside = ScoreTimeline(
        notes=[
            NoteEvent(Instrument.GUITAR, 52, 100, 1500),
            NoteEvent(Instrument.GUITAR, 55, 104, 1500),
            NoteEvent(Instrument.GUITAR, 59, 108, 1500),
        ]
    )
    spans = detect_chords(inside)
    assert len(spans) == 1 and spans[0].instrument is Instrument.GUITAR
    outside = ScoreTimeline(
        notes=[
            NoteEvent(Instrument.GUITAR, 52, 100, 1500),
            NoteEvent(Instrument.GUITAR, 55, 104, 1500),
            NoteEvent(Instrument.GUITAR, 59, 117, 1500),
        ]
    )
    assert detect_chords(outside) == []


def test_detect_beat_override_and_tempo():
    # at 60 BPM two beats = 2000 ms, so a 1500 ms chord fails ...
    slow = ScoreTimeline(notes=triad(Instrument.PIANO, (60, 64, 67), 0, 1500), tempo_bpm=60.0)
    assert detect_chords(slow) == []
    # ... unless the caller overrides the beat length
    assert len(detect_chords(slow, beat_ms=500.0)) == 1


def test_detect_multiple_sorted():
    score = ScoreTimeline(
        notes=triad(Instrument.PIANO, (60, 64, 67), 4000, 1200)
        + triad(Instrument.GUITAR, (52, 55, 59), 1000, 1200)
    )
    spans = detect_chords(score)
    assert [(s.onset_ms, s.instrument) for s in spans] == [
        (1000, Instrument.GUITAR),
        (4000, Instrument.PIANO),
    ]


def test_insert_chord_before_first_on():
    score = ScoreTimeline(
        notes=[NoteEvent(Instrument.BASS, 40, 0, 500)]
        + triad(Instrument.PIANO, (60, 64, 67), 1000, 1200)
    )
    spans = detect_chords(score)
    toks = encode_events(score, include_bars=False)
    with_chords = insert_chord_tokens(toks, spans)
    names = [t.name for t in with_chords]
    i = names.index("CHORD")
    assert names[i + 1] == "PIANO_ON_60"
    assert names.count("CHORD") == 1
    # CHORD sits right after the TIMESHIFT reaching 1000 ms
    assert names[i - 1].startswith("TIMESHIFT")


def test_insert_no_match_raises():
    toks = encode_events(
        ScoreTimeline(notes=[NoteEvent(Instrument.BASS, 40, 0, 500)]), include_bars=False
    )
    bogus = ChordSpan(Instrument.PIANO, 0, (60, 64, 67), 1000)
    with pytest.raises(ChordLabelError):
        insert_chord_tokens(toks, [bogus])


def test_insert_count_matches_span_count():
    rng = random.Random(11)
    for _ in range(20):
        notes = []
        t = 0
        n_chords = rng.randint(0, 5)
        for _ in range(n_chords):
            pitches = rng.sample(range(48, 84), 3)
            notes += triad(Instrument.PIANO, pitches, t, 1000 + 8 * rng.randint(0, 50))
            t += 2000
        score = ScoreTimeline(notes=notes)
        spans = detect_chords(score)
        assert len(spans) == n_chords
        toks = insert_chord_tokens(encode_events(score, include_bars=False), spans)
        assert sum(1 for x in toks if x.kind is TokenKind.CHORD) == n_chords


def test_dropout_rate_edges():
    toks = [CHORD, Token.shift(8), CHORD, Token.shift(8), CHORD]
    assert dropout_chords(toks, 0.0, seed=1) == toks
    kept = dropout_chords(toks, 1.0, seed=1)
    assert all(t.kind is not TokenKind.CHORD for t in kept)
    assert len(kept) == 2
    with pytest.raises(ValueError):
        dropout_chords(toks, 1.5, seed=1)
    with pytest.raises(ValueError):
        dropout_chords(toks, -0.1, seed=1)


def test_dropout_preserves_non_chords_and_order():
    toks = [Token.shift(8), CHORD, Token.on(Instrument.PIANO, 60), CHORD, Token.shift(16)]
    out = dropout_chords(toks, 0.5, seed=3)
    assert [t for t in out if t.kind is not TokenKind.CHORD] == [
        Token.shift(8), Token.on(Instrument.PIANO, 60), Token.shift(16)
    ]


def test_dropout_statistics():
    toks = [CHORD] * 10_000
    kept = dropout_chords(toks, 0.2, seed=42)
    removed = len(toks) - len(kept)
    assert abs(removed - 2000) <= 120  # 3 sigma of Binomial(10000, 0.2)


def test_dropout_deterministic_per_seed():
    toks = [CHORD if i % 3 else Token.shift(8) for i in range(300)]
    assert dropout_chords(toks, 0.2, seed=5) == dropout_chords(toks, 0.2, seed=5)
    assert dropout_chords(toks, 0.2, seed=5) != dropout_chords(toks, 0.2, seed=6)


def test_boost_velocity():
    score = ScoreTimeline(
        notes=triad(Instrument.PIANO, (60, 64, 67), 0, 1200, velocity=80)
        + [NoteEvent(Instrument.PIANO, 80, 3000, 3200, velocity=80)]
    )
    boosted = boost_chord_velocity(score, [0], gain=20)
    by_pitch = {n.pitch: n.velocity for n in boosted.notes}
    assert by_pitch[60] == by_pitch[64] == by_pitch[67] == 100
    assert by_pitch[80] == 80  # note away from every chord onset untouched


def test_boost_uses_simultaneity_window():
    notes = [
        NoteEvent(Instrument.PIANO, 60, 1000, 2200, velocity=80),
        NoteEvent(Instrument.BASS, 36, 1008, 2200, velocity=80),  # inside window
        NoteEvent(Instrument.PIANO, 72, 1009, 2200, velocity=80),  # outside
    ]
    boosted = boost_chord_velocity(ScoreTimeline(notes=notes), [1000], gain=20)
    by_pitch = {n.pitch: n.velocity for n in boosted.notes}
    assert by_pitch[60] == 100
    assert by_pitch[36] == 100  # any instrument at the onset is part of the hit
    assert by_pitch[72] == 80


def test_boost_saturates_and_validates():
    score = ScoreTimeline(notes=triad(Instrument.PIANO, (60, 64, 67), 0, 1200, velocity=120))
    boosted = boost_chord_velocity(score, [0], gain=20)
    assert all(n.velocity == 127 for n in boosted.notes)
    assert boost_chord_velocity(score, [0], gain=0) == score
    assert boost_chord_velocity(score, [], gain=20) == score
    with pytest.raises(ValueError):
        boost_chord_velocity(score, [0], gain=-1)


def test_span_report_round_trip():
    spans = [
        ChordSpan(Instrument.PIANO, 1000, (60, 64, 67), 1200),
        ChordSpan(Instrument.GUITAR, 4512, (52, 55, 59, 62), 2000),
    ]
    text = format_spans(spans)
    assert text.splitlines()[0] == "1.000\tpiano\t1.200\t60,64,67"
    assert parse_spans(text) == spans


def test_chord_span_validation():
    with pytest.raises(ValueError):
        ChordSpan(Instrument.STRINGS, 0, (60, 64, 67), 1000)
    with pytest.raises(ValueError):
        ChordSpan(Instrument.PIANO, 0, (60, 64), 1000)
    with pytest.raises(ValueError):
        ChordSpan(Instrument.PIANO, 0, (60, 64, 64), 1000)
    with pytest.raises(ValueError):
        ChordSpan(Instrument.PIANO, 0, (60, 64, 67), 0)


def test_insert_then_remove_recovers_original():
    rng = random.Random(23)
    for _ in range(10):
        notes = []
        t = 0
        for _ in range(rng.randint(1, 4)):
            notes += triad(Instrument.PIANO, rng.sample(range(50, 80), 3), t, 1200)
            t += 2500
        score = ScoreTimeline(notes=notes)
        toks = encode_events(score, include_bars=False)
        inserted = insert_chord_tokens(toks, detect_chords(score))
        stripped = [x for x in inserted if x.kind is not TokenKind.CHORD]
        assert stripped == toks
