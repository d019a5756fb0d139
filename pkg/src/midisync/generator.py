"""Grammar-constrained autoregressive generation against boundaries.

A *model* here is anything that maps the generation context (token
history, per-token offset history, valence, arousal) to a probability
distribution over the vocabulary.  The loop in :func:`generate` owns
everything else: it masks grammatically invalid continuations, applies
temperature and top-k, samples with a seeded generator, feeds every
emitted token to the boundary scheduler, and stops once the time cursor
reaches the requested duration.

Two models ship with the package: :class:`ReferenceModel`, a small
hand-written heuristic that reacts to valence/arousal and to the
current boundary offset, and :class:`ScriptedBoundaryModel`, a
deterministic walker that provably places a chord inside every
boundary's sensitivity window (useful for end-to-end pipeline checks).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .scheduler import (
    BoundaryList,
    BoundaryState,
    GeneratorState,
    SchedulerParams,
    on_token,
)
from .tokens import (
    CHORD,
    MAX_SHIFT_MS,
    RESOLUTION_MS,
    START,
    VOCABULARY,
    Instrument,
    Token,
    TokenKind,
)
from .emotion import VAPoint

DEFAULT_TEMPERATURE = 1.0
DEFAULT_TOP_K = 32
DEFAULT_MAX_TOKENS = 200_000

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)


class GenerationError(RuntimeError):
    """The sampling loop could not continue; the message names the state."""


class NextTokenModel(Protocol):
    """Anything that proposes the next token as a vocabulary distribution."""

    def next_distribution(
        self,
        tokens: list[Token],
        offsets: list[float],
        valence: float | None,
        arousal: float | None,
    ) -> np.ndarray:
        ...


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    top_k: int | None = DEFAULT_TOP_K
    seed: int = 0
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------


def _open_note_counts(tokens: list[Token]) -> dict[tuple[Instrument, int], int]:
    counts: dict[tuple[Instrument, int], int] = {}
    for tok in tokens:
        if tok.kind is TokenKind.ON:
            counts[(tok.instrument, tok.pitch)] = counts.get((tok.instrument, tok.pitch), 0) + 1
        elif tok.kind is TokenKind.OFF:
            key = (tok.instrument, tok.pitch)
            if counts.get(key, 0) > 0:
                counts[key] -= 1
    return counts


def grammar_mask(tokens: list[Token], vocab=VOCABULARY) -> np.ndarray:
    """Boolean mask of grammatically valid next tokens.

    Rules: an OFF is valid only for a currently open (instrument,
    pitch); START and PAD are valid only at position zero; a second
    CHORD is invalid until at least one ON has followed the previous
    CHORD (a chord marker must announce some notes).
    """
    mask = np.ones(len(vocab), dtype=bool)
    for tok in vocab:
        if tok.kind is TokenKind.OFF:
            mask[vocab.id_of(tok)] = False
    for (instrument, pitch), count in _open_note_counts(tokens).items():
        if count > 0:
            mask[vocab.id_of(Token.off(instrument, pitch))] = True
    if tokens:
        mask[vocab.id_of(START)] = False
        mask[vocab.id_of(Token(TokenKind.PAD))] = False
    for tok in reversed(tokens):
        if tok.kind is TokenKind.ON:
            break
        if tok.kind is TokenKind.CHORD:
            mask[vocab.id_of(CHORD)] = False
            break
    return mask


# ---------------------------------------------------------------------------
# Model-input assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputAssembly:
    """Shape description of one assembled conditioning sequence.

    The model consumes the token sequence with two conditioning slots
    (valence, arousal) prepended, so ``sequence_length`` is always the
    token count plus two.  Each position's feature vector is split
    half/half between a position encoding and an encoding of that
    position's boundary offset; the conditioning slots reuse the first
    offset.  An unspecified valence/arousal is flagged so the model can
    substitute its learned stand-in vector.
    """

    sequence_length: int
    token_count: int
    feature_dim: int
    position_feature_dim: int
    offset_feature_dim: int
    position_offsets: tuple[float, ...]
    valence: float | None
    arousal: float | None
    valence_substituted: bool
    arousal_substituted: bool


def assemble_input(
    tokens: list[Token],
    offsets: list[float],
    va: VAPoint,
    feature_dim: int = 512,
    default_offset: float = 0.0,
) -> InputAssembly:
    """Validate and describe the model input for one sequence."""
    if feature_dim < 2 or feature_dim % 2:
        raise ValueError(f"feature_dim must be an even number >= 2, got {feature_dim}")
    if len(offsets) != len(tokens):
        raise ValueError(
            f"offsets ({len(offsets)}) must align one-to-one with tokens ({len(tokens)})"
        )
    lead = offsets[0] if offsets else default_offset
    return InputAssembly(
        sequence_length=len(tokens) + 2,
        token_count=len(tokens),
        feature_dim=feature_dim,
        position_feature_dim=feature_dim // 2,
        offset_feature_dim=feature_dim // 2,
        position_offsets=(lead, lead, *offsets),
        valence=va.valence,
        arousal=va.arousal,
        valence_substituted=va.valence is None,
        arousal_substituted=va.arousal is None,
    )


# ---------------------------------------------------------------------------
# Generation loop
# ---------------------------------------------------------------------------


@dataclass
class GenerationResult:
    tokens: list[Token]
    offsets: list[float]
    boundaries: BoundaryList
    final_cursor_s: float
    seed: int

    @property
    def consumed(self) -> list[float]:
        return self.boundaries.by_state(BoundaryState.CONSUMED)

    @property
    def expired(self) -> list[float]:
        return self.boundaries.by_state(BoundaryState.EXPIRED)

    @property
    def pending(self) -> list[float]:
        return self.boundaries.by_state(BoundaryState.PENDING)

    def diagnostics(self) -> dict:
        return {
            "token_count": len(self.tokens),
            "chord_count": sum(1 for t in self.tokens if t.kind is TokenKind.CHORD),
            "final_cursor_s": self.final_cursor_s,
            "boundaries_total": len(self.boundaries),
            "boundaries_consumed": self.consumed,
            "boundaries_expired": self.expired,
            "boundaries_pending": self.pending,
            "seed": self.seed,
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2) + "\n"


def _validate_distribution(probs: np.ndarray, step: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(VOCABULARY),):
        raise GenerationError(
            f"step {step}: model distribution has shape {probs.shape}, "
            f"expected ({len(VOCABULARY)},)"
        )
    if np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise GenerationError(f"step {step}: model distribution has invalid entries")
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise GenerationError(f"step {step}: model distribution sums to {total!r}, not 1")
    return probs


def generate(
    model: NextTokenModel,
    va: VAPoint,
    boundaries: BoundaryList,
    duration_s: float,
    sampling: SamplingParams | None = None,
    scheduler: SchedulerParams | None = None,
) -> GenerationResult:
    """Sample a token sequence of roughly ``duration_s`` seconds.

    The emitted history always begins with START.  Each step masks the
    model's distribution with the grammar, renormalizes, applies
    temperature (probabilities raised to 1/T) and top-k truncation, and
    samples.  The loop ends when the cursor reaches ``duration_s``
    (overshoot is below one maximal time shift), and fails loudly if
    ``max_tokens`` is hit first.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    sampling = sampling or SamplingParams()
    scheduler = scheduler or SchedulerParams()
    rng = np.random.default_rng(sampling.seed)

    state = GeneratorState.new(boundaries)
    on_token(state, START, scheduler)

    while state.cursor_s < duration_s:
        if len(state.tokens) >= sampling.max_tokens:
            raise GenerationError(
                f"exceeded max_tokens={sampling.max_tokens} at cursor "
                f"{state.cursor_s:.3f} s of {duration_s:.3f} s"
            )
        probs = _validate_distribution(
            model.next_distribution(state.tokens, state.offsets, va.valence, va.arousal),
            step=len(state.tokens),
        )
        masked = np.where(grammar_mask(state.tokens), probs, 0.0)
        total = float(masked.sum())
        if total <= 0.0:
            raise GenerationError(
                f"no grammatically valid token has probability mass at cursor "
                f"{state.cursor_s:.3f} s (step {len(state.tokens)})"
            )
        masked /= total
        if sampling.temperature != 1.0:
            nonzero = masked > 0
            masked[nonzero] = masked[nonzero] ** (1.0 / sampling.temperature)
            masked /= masked.sum()
        if sampling.top_k is not None and sampling.top_k < np.count_nonzero(masked):
            keep = np.argpartition(masked, -sampling.top_k)[-sampling.top_k:]
            pruned = np.zeros_like(masked)
            pruned[keep] = masked[keep]
            masked = pruned / pruned.sum()
        token_id = int(rng.choice(len(masked), p=masked))
        on_token(state, VOCABULARY.token_of(token_id), scheduler)

    return GenerationResult(
        tokens=state.tokens,
        offsets=state.offsets,
        boundaries=state.boundaries,
        final_cursor_s=state.cursor_s,
        seed=sampling.seed,
    )


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------


def _snap_shift(ms: float) -> int:
    snapped = int(round(ms / RESOLUTION_MS)) * RESOLUTION_MS
    return max(RESOLUTION_MS, min(MAX_SHIFT_MS, snapped))


def _history_facts(tokens: list[Token]) -> tuple[int, dict, list[Token]]:
    """Cursor, open-note ages, and the tokens since the last CHORD/TIMESHIFT."""
    cursor = 0
    opened_at: dict[tuple[Instrument, int], list[int]] = {}
    for tok in tokens:
        if tok.kind is TokenKind.TIMESHIFT:
            cursor += tok.shift_ms
        elif tok.kind is TokenKind.ON:
            opened_at.setdefault((tok.instrument, tok.pitch), []).append(cursor)
        elif tok.kind is TokenKind.OFF:
            stack = opened_at.get((tok.instrument, tok.pitch))
            if stack:
                stack.pop(0)
    tail: list[Token] = []
    for tok in reversed(tokens):
        if tok.kind is TokenKind.CHORD:
            break
        tail.append(tok)
    else:
        tail = []  # no CHORD in history at all
    tail.reverse()
    return cursor, opened_at, tail


def _chord_fill_remaining(tokens: list[Token], triad: tuple[int, ...]) -> list[int]:
    """Triad pitches still owed to the most recent CHORD marker, if any."""
    _, _, since_chord = _history_facts(tokens)
    if not tokens or not any(t.kind is TokenKind.CHORD for t in tokens):
        return []
    if any(t.kind is TokenKind.TIMESHIFT for t in since_chord):
        return []
    played = [t.pitch for t in since_chord if t.kind is TokenKind.ON]
    if len(played) >= len(triad):
        return []
    return [p for p in triad if p not in played]


class ScriptedBoundaryModel:
    """Deterministic walker that hits every boundary's window.

    Strategy: shift toward the next boundary, stopping about 300 ms
    short; emit CHORD plus a held piano triad there; release notes once
    they have sounded for at least two beats and the next boundary is
    comfortably far.  Every distribution is one-hot, so generation is
    identical for any seed.
    """

    CHORD_TRIGGER_MS = 400
    APPROACH_MARGIN_MS = 300
    HOLD_MS = 1000
    RELEASE_FLOOR_MS = 600

    def __init__(self, root_pitch: int = 60):
        if not 0 <= root_pitch <= 115:
            raise ValueError("root_pitch must leave room for a triad above it")
        self.triad = (root_pitch, root_pitch + 4, root_pitch + 7)

    def next_distribution(self, tokens, offsets, valence, arousal):
        probs = np.zeros(len(VOCABULARY))
        probs[VOCABULARY.id_of(self._next_token(tokens, offsets))] = 1.0
        return probs

    def _next_token(self, tokens: list[Token], offsets: list[float]) -> Token:
        cursor, opened_at, _ = _history_facts(tokens)
        offset_ms = int(round((offsets[-1] if offsets else 4.0) * 1000))

        remaining = _chord_fill_remaining(tokens, self.triad)
        if remaining:
            return Token.on(Instrument.PIANO, remaining[0])
        if offset_ms <= self.CHORD_TRIGGER_MS:
            return CHORD
        ripe = [
            (starts[0], inst, pitch)
            for (inst, pitch), starts in opened_at.items()
            if starts and cursor - starts[0] >= self.HOLD_MS
        ]
        if ripe and offset_ms > self.RELEASE_FLOOR_MS:
            _, inst, pitch = min(ripe)
            return Token.off(inst, pitch)
        return Token.shift(_snap_shift(offset_ms - self.APPROACH_MARGIN_MS))


class ReferenceModel:
    """Hand-written heuristic model used as the package's default.

    Valence picks the scale (major above zero, minor otherwise) around a
    configurable key root; arousal sets the pacing (higher arousal means
    shorter time shifts, hence more events per second); the probability
    of a CHORD rises sharply as the boundary offset approaches zero.
    The returned weights are deterministic functions of the context, so
    fixed-seed generation is reproducible.
    """

    def __init__(
        self,
        key_root: int = 60,
        params: SchedulerParams | None = None,
        max_open_notes: int = 6,
    ):
        if not 12 <= key_root <= 108:
            raise ValueError(f"key_root should be a mid-range pitch, got {key_root}")
        self.key_root = key_root
        self.params = params or SchedulerParams()
        self.max_open_notes = max_open_notes

    # -- internals -----------------------------------------------------
    def _scale(self, valence: float | None) -> tuple[int, ...]:
        v = 0.5 if valence is None else valence
        return MAJOR_SCALE if v > 0 else MINOR_SCALE

    def _triad(self, valence: float | None) -> tuple[int, int, int]:
        scale = self._scale(valence)
        return (self.key_root, self.key_root + scale[2], self.key_root + 7)

    def _step_ms(self, arousal: float | None) -> int:
        a = 0.0 if arousal is None else arousal
        return _snap_shift(550.0 - 350.0 * a)

    def _chord_weight(self, offset_s: float) -> float:
        if offset_s <= 0.4:
            return 25.0
        if offset_s <= 0.8:
            return 4.0
        return 0.02

    # -- protocol --------------------------------------------------------
    def next_distribution(self, tokens, offsets, valence, arousal):
        weights = np.zeros(len(VOCABULARY))
        cursor, opened_at, _ = _history_facts(tokens)
        offset_s = offsets[-1] if offsets else self.params.max_offset_s
        step = self._step_ms(arousal)
        triad = self._triad(valence)

        remaining = _chord_fill_remaining(tokens, triad)
        if remaining:
            for pitch in remaining:
                weights[VOCABULARY.id_of(Token.on(Instrument.PIANO, pitch))] = 1.0
            return weights / weights.sum()

        weights[VOCABULARY.id_of(CHORD)] = self._chord_weight(offset_s)
        weights[VOCABULARY.id_of(Token.shift(step))] = 3.0
        weights[VOCABULARY.id_of(Token.shift(_snap_shift(step * 2)))] += 0.5
        weights[VOCABULARY.id_of(Token.shift(_snap_shift(step / 2)))] += 0.5

        open_keys = [(k, v) for k, v in opened_at.items() if v]
        open_count = sum(len(v) for _, v in open_keys)
        if open_count < self.max_open_notes:
            scale = self._scale(valence)
            last_pitch = next(
                (t.pitch for t in reversed(tokens) if t.kind is TokenKind.ON),
                self.key_root + 12,
            )
            candidates = sorted(
                (self.key_root + octave + degree for octave in (0, 12) for degree in scale),
                key=lambda p: abs(p - last_pitch),
            )[:5]
            for rank, pitch in enumerate(candidates):
                if 0 <= pitch < 128:
                    weights[VOCABULARY.id_of(Token.on(Instrument.PIANO, pitch))] += 1.2 / (rank + 1)
        for (inst, pitch), starts in open_keys:
            if cursor - starts[0] >= 2 * step:
                weights[VOCABULARY.id_of(Token.off(inst, pitch))] += 1.5

        return weights / weights.sum()
