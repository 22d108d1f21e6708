"""Frame-level prosodic and spectral features from mono PCM audio.

Everything here is deterministic and amplitude-aware only where it should
be: frame energy scales with the signal, the F0 estimator does not (it
works on normalized autocorrelation).  F0 uses a normalized
cross-correlation search over the candidate lag range with parabolic peak
refinement; among near-equal correlation peaks the shortest lag wins,
which suppresses subharmonic (octave-down) picks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.io import wavfile

from .errors import SignalTooShort

SILENCE_RMS_FLOOR = 1e-4

# Peaks within this fraction of the best correlation count as equivalent;
# the earliest such lag is taken as the period.
_PEAK_EQUIV = 0.97


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples",
                           np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono audio (1-D samples)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    win_ms: float = 20.0
    hop_ms: float = 5.0
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.win_ms:
            raise ValueError(f"need 0 < hop_ms <= win_ms, got "
                             f"hop={self.hop_ms}, win={self.win_ms}")
        if self.window not in ("hann", "rectangular"):
            raise ValueError(f"unknown window {self.window!r}")

    def win_samples(self, sample_rate: int) -> int:
        return int(round(self.win_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_ms * sample_rate / 1000.0)))


@dataclass(frozen=True)
class ProsodyTrack:
    """Per-frame log-F0 (voiced frames only), voicing flags and energy."""

    frame_times: np.ndarray
    log_f0: np.ndarray     # natural log of Hz; meaningful only where voiced
    voiced: np.ndarray     # bool
    energy: np.ndarray

    def __post_init__(self):
        n = len(self.frame_times)
        if not (len(self.log_f0) == len(self.voiced) == len(self.energy) == n):
            raise ValueError("ProsodyTrack sequences must have equal length")
        if np.any(self.energy < 0):
            raise ValueError("energy must be non-negative")
        if n and not np.all(np.isfinite(self.log_f0[self.voiced])):
            raise ValueError("log_f0 must be finite on voiced frames")

    def __len__(self) -> int:
        return len(self.frame_times)


@dataclass(frozen=True)
class FrameFeatureSeq:
    """Fixed-dimension per-frame feature vectors (T x dim)."""

    frames: np.ndarray
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "frames",
                           np.asarray(self.frames, dtype=np.float64))
        if self.frames.ndim != 2 or self.frames.shape[1] != self.dim:
            raise ValueError(f"frames must be (T, {self.dim}), "
                             f"got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frame features contain non-finite values")

    def __len__(self) -> int:
        return len(self.frames)


def _taper(n: int, kind: str) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(n)
    # periodic hann, the standard analysis choice
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(audio: AudioBuffer, cfg: FrameConfig):
    """Slice into overlapping frames.

    Returns ``(frames, frame_times)`` where ``frames`` is (T, W) and
    ``frame_times[i]`` is the center of frame i in seconds.  Raises
    :class:`SignalTooShort` when the signal is shorter than one window.
    """
    x = audio.samples
    sr = audio.sample_rate
    w = cfg.win_samples(sr)
    h = cfg.hop_samples(sr)
    if len(x) < w:
        raise SignalTooShort(f"signal has {len(x)} samples, window needs {w}")
    n_frames = (len(x) - w) // h + 1
    idx = np.arange(w)[None, :] + h * np.arange(n_frames)[:, None]
    frames = x[idx]
    times = (h * np.arange(n_frames) + w / 2.0) / sr
    return frames, times


def stft_energy(frame: np.ndarray, window: str = "hann") -> float:
    """L2 norm of the one-sided magnitude spectrum of the tapered frame."""
    frame = np.asarray(frame, dtype=np.float64)
    tapered = frame * _taper(len(frame), window)
    spec = np.fft.rfft(tapered)
    return float(np.sqrt(np.sum(np.abs(spec) ** 2)))


def _frame_energies(frames: np.ndarray, window: str) -> np.ndarray:
    tapered = frames * _taper(frames.shape[1], window)[None, :]
    spec = np.fft.rfft(tapered, axis=1)
    return np.sqrt(np.sum(np.abs(spec) ** 2, axis=1))


def _nccf(x: np.ndarray, start: int, span: int, max_lag: int) -> np.ndarray:
    """Normalized cross-correlation of x[start:start+span] against itself
    shifted by lags 0..max_lag.  Values in [-1, 1] up to rounding."""
    seg = x[start:start + span + max_lag]
    a = x[start:start + span]
    n = next_fast_len(len(seg) + span, real=True)
    fa = np.fft.rfft(a, n)
    fs = np.fft.rfft(seg, n)
    corr = np.fft.irfft(np.conj(fa) * fs, n)[:max_lag + 1]
    sq = np.concatenate(([0.0], np.cumsum(seg * seg)))
    e0 = sq[span]
    e_tau = sq[span:span + max_lag + 1] - sq[:max_lag + 1]
    denom = np.sqrt(e0 * e_tau)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, corr / np.maximum(denom, 1e-300), 0.0)
    return out


def _refine_peak(r: np.ndarray, lag: int) -> tuple[float, float]:
    """Parabolic interpolation around an integer-lag correlation peak."""
    if lag <= 0 or lag >= len(r) - 1:
        return float(lag), float(r[lag])
    rm, r0, rp = r[lag - 1], r[lag], r[lag + 1]
    denom = rm - 2.0 * r0 + rp
    if denom >= 0 or abs(denom) < 1e-30:
        return float(lag), float(r0)
    delta = 0.5 * (rm - rp) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    value = r0 - 0.25 * (rm - rp) * delta
    return lag + delta, float(value)


def estimate_f0(audio: AudioBuffer, cfg: FrameConfig,
                f0_min: float = 40.0, f0_max: float = 500.0,
                voicing_threshold: float = 0.3) -> ProsodyTrack:
    """Per-frame F0 with voicing decision; energy filled via the STFT norm.

    A frame is voiced when its best normalized-autocorrelation peak in the
    candidate lag range reaches ``voicing_threshold`` and the frame RMS is
    above the silence floor.  F0 comes from the chosen lag after parabolic
    refinement; ``log_f0`` is the natural log of Hz.
    """
    if f0_min >= f0_max:
        raise ValueError(f"need f0_min < f0_max, got {f0_min} >= {f0_max}")
    sr = audio.sample_rate
    if sr < 4 * f0_max:
        raise ValueError(f"sample rate {sr} too low to resolve f0_max={f0_max}")

    frames, times = frame_signal(audio, cfg)
    energy = _frame_energies(frames, cfg.window)

    x = audio.samples
    w = cfg.win_samples(sr)
    h = cfg.hop_samples(sr)
    lag_min = max(2, int(math.floor(sr / f0_max)))
    lag_max = int(math.ceil(sr / f0_min))

    n = len(frames)
    voiced = np.zeros(n, dtype=bool)
    log_f0 = np.zeros(n)
    rms = np.sqrt(np.mean(frames * frames, axis=1))

    for i in range(n):
        if rms[i] <= SILENCE_RMS_FLOOR:
            continue
        start = i * h
        avail = len(x) - start - w
        max_lag = min(lag_max, avail)
        if max_lag <= lag_min + 1:
            continue
        seg = x[start:start + w + max_lag]
        seg = seg - seg.mean()
        r = _nccf(seg, 0, w, max_lag)
        window = r[lag_min:max_lag + 1]
        if len(window) < 3:
            continue
        interior = window[1:-1]
        is_peak = (interior > window[:-2]) & (interior >= window[2:])
        peak_lags = np.nonzero(is_peak)[0] + lag_min + 1
        if len(peak_lags) == 0:
            continue
        best = float(np.max(r[peak_lags]))
        if best < voicing_threshold:
            continue
        candidates = peak_lags[r[peak_lags] >= _PEAK_EQUIV * best]
        lag = int(candidates[0])
        ref_lag, ref_val = _refine_peak(r, lag)
        if ref_val < voicing_threshold or ref_lag <= 0:
            continue
        f0 = sr / ref_lag
        if not (f0_min * 0.9 <= f0 <= f0_max * 1.1):
            continue
        voiced[i] = True
        log_f0[i] = math.log(f0)

    return ProsodyTrack(frame_times=times, log_f0=log_f0,
                        voiced=voiced, energy=energy)


# ---------------------------------------------------------------------------
# mel filterbank features
# ---------------------------------------------------------------------------

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_bands: int, n_fft_bins: int, sample_rate: int) -> np.ndarray:
    """Triangular filters (n_bands x n_fft_bins) over the one-sided spectrum."""
    nyquist = sample_rate / 2.0
    edges_hz = _mel_to_hz(np.linspace(0.0, _hz_to_mel(nyquist), n_bands + 2))
    bin_hz = np.linspace(0.0, nyquist, n_fft_bins)
    fb = np.zeros((n_bands, n_fft_bins))
    for b in range(n_bands):
        lo, ctr, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        up = (bin_hz - lo) / max(ctr - lo, 1e-12)
        down = (hi - bin_hz) / max(hi - ctr, 1e-12)
        fb[b] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_band_centers(n_bands: int, sample_rate: int) -> np.ndarray:
    """Center frequency in Hz of each triangular band."""
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(sample_rate / 2.0),
                                   n_bands + 2))
    return edges[1:-1]


def mel_band_energies(frame: np.ndarray, sample_rate: int,
                      n_bands: int, window: str = "hann") -> np.ndarray:
    """log(1 + band energy) per triangular mel band of the frame spectrum."""
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    frame = np.asarray(frame, dtype=np.float64)
    tapered = frame * _taper(len(frame), window)
    mag = np.abs(np.fft.rfft(tapered))
    fb = mel_filterbank(n_bands, len(mag), sample_rate)
    return np.log1p(fb @ mag)


def acoustic_frames(audio: AudioBuffer, cfg: FrameConfig,
                    n_bands: int = 16,
                    f0_min: float = 40.0, f0_max: float = 500.0,
                    voicing_threshold: float = 0.3) -> FrameFeatureSeq:
    """Per-frame [log-energy, log-F0-or-0, voiced flag, mel bands].

    dim = 3 + n_bands; frame count matches :func:`frame_signal`.
    """
    track = estimate_f0(audio, cfg, f0_min=f0_min, f0_max=f0_max,
                        voicing_threshold=voicing_threshold)
    frames, _ = frame_signal(audio, cfg)
    tapered = frames * _taper(frames.shape[1], cfg.window)[None, :]
    mag = np.abs(np.fft.rfft(tapered, axis=1))
    fb = mel_filterbank(n_bands, mag.shape[1], audio.sample_rate)
    mel = np.log1p(mag @ fb.T)

    feats = np.zeros((len(frames), 3 + n_bands))
    feats[:, 0] = np.log1p(track.energy)
    feats[:, 1] = np.where(track.voiced, track.log_f0, 0.0)
    feats[:, 2] = track.voiced.astype(np.float64)
    feats[:, 3:] = mel
    return FrameFeatureSeq(frames=feats, dim=3 + n_bands)


# ---------------------------------------------------------------------------
# WAV + CSV interfaces
# ---------------------------------------------------------------------------

def read_wav(path) -> AudioBuffer:
    """Read a mono RIFF/WAVE file (PCM16 or IEEE float32)."""
    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}; "
                         "use PCM16 or float32")
    return AudioBuffer(samples=samples, sample_rate=int(sr))


def write_wav(path, audio: AudioBuffer) -> None:
    """Write as PCM16 little-endian mono."""
    clipped = np.clip(audio.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(path, audio.sample_rate, pcm)


def prosody_to_csv(track: ProsodyTrack, fh) -> None:
    """Columns: time_s, voiced (0/1), f0_hz (empty when unvoiced), log_f0, energy."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["time_s", "voiced", "f0_hz", "log_f0", "energy"])
    for i in range(len(track)):
        if track.voiced[i]:
            f0 = math.exp(track.log_f0[i])
            row = [repr(float(track.frame_times[i])), 1,
                   repr(f0), repr(float(track.log_f0[i])),
                   repr(float(track.energy[i]))]
        else:
            row = [repr(float(track.frame_times[i])), 0, "", "",
                   repr(float(track.energy[i]))]
        writer.writerow(row)
