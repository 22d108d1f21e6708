"""Word-level emphasis detection from aligned prosody.

Pipeline: frame features are aggregated per aligned word (max log-F0 over
voiced frames, mean frame energy, mean phoneme duration), standardized
per sentence, and fused into an emphasis score

    s(w) = alpha * z_pitch(w) + beta * z_energy(w) + gamma * z_duration(w)

with default weights (1.0, 1.2, 0.8).  The top-scoring word plus its two
neighbours forms the emphasis segment (a top-k mode is also available).
Degenerate sentences are handled by explicit rules rather than NaNs: a
constant feature column z-scores to zeros, a word without voiced frames
takes the sentence-mean pitch (so its pitch z-score is 0), and a word
without aligned phones uses its own length as the duration feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import AudioBuffer, FrameConfig, ProsodyTrack, estimate_f0
from .errors import EmptyInput
from .textgrid import (
    DEFAULT_SILENCE_LABELS,
    Interval,
    TextGrid,
    phones_for_word,
    word_intervals,
)

ZSCORE_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class EmphasisWeights:
    alpha: float = 1.0
    beta: float = 1.2
    gamma: float = 0.8


@dataclass(frozen=True)
class WordProsody:
    """Raw and standardized prosodic features of one aligned word."""

    word: str
    interval: Interval
    f_pitch: float        # max voiced log-F0; sentence mean when undefined
    f_energy: float
    f_duration: float
    z_pitch: float
    z_energy: float
    z_duration: float
    score: float
    pitch_defined: bool = True


@dataclass(frozen=True)
class EmphasisSegment:
    word_indices: tuple[int, ...]
    words: tuple[str, ...]
    time_span: float
    mode: str


@dataclass(frozen=True)
class ExtendedInfo:
    """The six description categories assembled into the ES text."""

    free_label: str = ""
    constrained_label: str = ""
    explanation: str = ""
    scenario: str = ""
    paralinguistics: str = ""
    gender: str = ""


@dataclass(frozen=True)
class LemfConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    weights: EmphasisWeights = field(default_factory=EmphasisWeights)
    mode: str = "adjacent"          # "adjacent" | "topk"
    top_k: int = 3
    word_tier: str = "words"
    phone_tier: str | None = "phones"
    f0_min: float = 40.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.3
    silence_labels: frozenset = DEFAULT_SILENCE_LABELS


@dataclass(frozen=True)
class LemfResult:
    words: tuple[WordProsody, ...]
    segment: EmphasisSegment
    track: ProsodyTrack


def aggregate_word_prosody(track: ProsodyTrack, word: Interval,
                           phones) -> tuple[float | None, float, float]:
    """Raw (f_pitch, f_energy, f_duration) for one word.

    f_pitch is None when the word has no voiced frames; the caller fills
    it with the sentence mean before standardization.
    """
    centers = np.asarray(track.frame_times)
    in_word = (centers >= word.xmin) & (centers < word.xmax)
    voiced_in_word = in_word & track.voiced

    f_pitch = float(np.max(track.log_f0[voiced_in_word])) \
        if np.any(voiced_in_word) else None
    f_energy = float(np.mean(track.energy[in_word])) if np.any(in_word) else 0.0
    if len(phones):
        f_duration = float(np.mean([p.xmax - p.xmin for p in phones]))
    else:
        f_duration = word.xmax - word.xmin
    return f_pitch, f_energy, f_duration


def zscore_normalize(values) -> np.ndarray:
    """Population z-scores; an (almost) constant sequence maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("cannot z-score an empty sequence")
    if not np.all(np.isfinite(values)):
        raise ValueError("z-score input must be finite")
    if np.all(values == values.flat[0]):
        # exactly constant: residuals are zero by definition, and the
        # computed mean of large identical values carries rounding dust
        return np.zeros_like(values)
    mu = float(np.mean(values))
    sigma = float(np.sqrt(np.mean((values - mu) ** 2)))
    if sigma < ZSCORE_SIGMA_FLOOR:
        return np.zeros_like(values)
    return (values - mu) / sigma


def emphasis_scores(words, weights: EmphasisWeights = EmphasisWeights()) -> np.ndarray:
    """s(w) per word from already-standardized features."""
    return np.array([
        weights.alpha * w.z_pitch + weights.beta * w.z_energy
        + weights.gamma * w.z_duration
        for w in words
    ])


def select_emphasis_indices(scores, mode: str = "adjacent",
                            k: int = 3) -> tuple[int, ...]:
    """Indices of the emphasis segment words, sorted ascending.

    adjacent: argmax (earliest on ties) plus neighbours, extended inward
    at sentence boundaries to keep min(3, N) words.  topk: the k highest
    scores, earliest index winning ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if n == 0:
        raise EmptyInput("no words to select an emphasis segment from")
    if mode == "adjacent":
        if n <= 3:
            return tuple(range(n))
        m = int(np.argmax(scores))
        start = min(max(m - 1, 0), n - 3)
        return (start, start + 1, start + 2)
    if mode == "topk":
        order = np.argsort(-scores, kind="stable")
        return tuple(sorted(int(i) for i in order[:min(k, n)]))
    raise ValueError(f"unknown segment mode {mode!r}")


def select_emphasis_segment(words, mode: str = "adjacent",
                            k: int = 3) -> EmphasisSegment:
    """Build the emphasis segment from scored words."""
    indices = select_emphasis_indices([w.score for w in words], mode=mode, k=k)
    chosen = [words[i] for i in indices]
    span = max(w.interval.xmax for w in chosen) - min(w.interval.xmin
                                                      for w in chosen)
    return EmphasisSegment(
        word_indices=indices,
        words=tuple(w.word for w in chosen),
        time_span=span,
        mode=mode,
    )


def assemble_extended_description(info: ExtendedInfo) -> str:
    """Deterministic description text from the six categories.

    Empty fields collapse their clause; all-empty input yields "".
    """
    first = ""
    if info.gender or info.free_label or info.constrained_label or info.scenario:
        first = f"This is a {info.gender} speaker" if info.gender \
            else "This is a speaker"
        if info.free_label:
            first += f", expressing {info.free_label}"
            if info.constrained_label:
                first += f" (categorized as {info.constrained_label})"
        elif info.constrained_label:
            first += f", categorized as {info.constrained_label}"
        if info.scenario:
            first += f", in {info.scenario}"
        first += "."

    sentences = []
    if first:
        sentences.append(first)
    if info.explanation:
        sentences.append(info.explanation.rstrip(".") + ".")
    if info.paralinguistics:
        sentences.append(
            f"The speech is characterized by {info.paralinguistics.rstrip('.')}.")
    return " ".join(sentences)


def analyze_words(track: ProsodyTrack, words, phones_per_word,
                  weights: EmphasisWeights = EmphasisWeights()
                  ) -> tuple[WordProsody, ...]:
    """Aggregate, standardize, and score a sentence of aligned words."""
    if not words:
        raise EmptyInput("sentence has no words")
    raws = [aggregate_word_prosody(track, w, ph)
            for w, ph in zip(words, phones_per_word)]

    pitches = [r[0] for r in raws]
    defined = [p for p in pitches if p is not None]
    fill = float(np.mean(defined)) if defined else 0.0
    pitch_col = np.array([fill if p is None else p for p in pitches])
    energy_col = np.array([r[1] for r in raws])
    duration_col = np.array([r[2] for r in raws])

    z_pitch = zscore_normalize(pitch_col)
    z_energy = zscore_normalize(energy_col)
    z_duration = zscore_normalize(duration_col)

    out = []
    for i, w in enumerate(words):
        score = (weights.alpha * z_pitch[i] + weights.beta * z_energy[i]
                 + weights.gamma * z_duration[i])
        out.append(WordProsody(
            word=w.label, interval=w,
            f_pitch=float(pitch_col[i]), f_energy=float(energy_col[i]),
            f_duration=float(duration_col[i]),
            z_pitch=float(z_pitch[i]), z_energy=float(z_energy[i]),
            z_duration=float(z_duration[i]),
            score=float(score),
            pitch_defined=pitches[i] is not None,
        ))
    return tuple(out)


def run_lemf(audio: AudioBuffer, tg: TextGrid,
             cfg: LemfConfig = LemfConfig()) -> LemfResult:
    """Full emphasis pipeline for one utterance."""
    track = estimate_f0(audio, cfg.frame, f0_min=cfg.f0_min,
                        f0_max=cfg.f0_max,
                        voicing_threshold=cfg.voicing_threshold)
    words = word_intervals(tg, cfg.word_tier, cfg.silence_labels)
    if not words:
        raise EmptyInput(f"tier {cfg.word_tier!r} has no word intervals")
    if cfg.phone_tier is not None:
        phones_per_word = [phones_for_word(tg, cfg.phone_tier, w,
                                           cfg.silence_labels)
                           for w in words]
    else:
        phones_per_word = [() for _ in words]
    scored = analyze_words(track, words, phones_per_word, cfg.weights)
    segment = select_emphasis_segment(scored, mode=cfg.mode, k=cfg.top_k)
    return LemfResult(words=scored, segment=segment, track=track)


def words_to_json(utt_id: str, result: LemfResult) -> dict:
    """The per-utterance JSON document emitted by the emphasis command."""
    return {
        "utt_id": utt_id,
        "words": [
            {
                "word": w.word,
                "xmin": w.interval.xmin,
                "xmax": w.interval.xmax,
                "f_pitch": w.f_pitch,
                "f_energy": w.f_energy,
                "f_duration": w.f_duration,
                "z_pitch": w.z_pitch,
                "z_energy": w.z_energy,
                "z_duration": w.z_duration,
                "score": w.score,
            }
            for w in result.words
        ],
        "segment": {
            "mode": result.segment.mode,
            "indices": list(result.segment.word_indices),
            "words": list(result.segment.words),
        },
    }
