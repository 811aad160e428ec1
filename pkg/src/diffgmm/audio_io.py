"""WAV reading/writing and basic waveform conditioning.

Only RIFF/WAVE with PCM16 (format tag 1) or IEEE float32 (format tag 3) is
supported.  Everything is converted to mono float64 in [-1, 1] on ingestion.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError, UnsupportedError

PCM16_SCALE = 32768.0
NORMALIZE_PEAK = 0.99


@dataclass
class AudioClip:
    """A mono waveform: float64 samples plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ContractError(f"clip must be mono 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("clip contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ContractError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def channel_count(self) -> int:
        return 1

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class NoisyPair:
    """A noisy clip with its clean reference and, when known, the noise.

    The stored noise is always the literal float difference noisy - clean,
    so ``noise == noisy.samples - clean.samples`` holds bit-exactly.
    """

    noisy: AudioClip
    clean: AudioClip
    noise: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if len(self.noisy) != len(self.clean):
            raise ContractError("noisy and clean clips must have identical length")
        if self.noisy.sample_rate_hz != self.clean.sample_rate_hz:
            raise ContractError("noisy and clean clips must share a sample rate")
        if self.noise is not None:
            self.noise = np.asarray(self.noise, dtype=np.float64)
            if not np.array_equal(self.noise, self.noisy.samples - self.clean.samples):
                raise ContractError("noise must equal noisy - clean exactly")

    @classmethod
    def from_clean_and_noise(cls, clean: AudioClip, noise: np.ndarray) -> "NoisyPair":
        noisy = AudioClip(clean.samples + noise, clean.sample_rate_hz)
        return cls(noisy=noisy, clean=clean, noise=noisy.samples - clean.samples)

    @property
    def residual(self) -> np.ndarray:
        """noisy - clean, whether or not the noise field was populated."""
        if self.noise is not None:
            return self.noise
        return self.noisy.samples - self.clean.samples


def peak_normalize(samples: np.ndarray, peak: float = NORMALIZE_PEAK) -> np.ndarray:
    """Rescale so max |sample| == peak, but only when it currently exceeds 1."""
    m = np.max(np.abs(samples)) if len(samples) else 0.0
    if m > 1.0:
        return samples * (peak / m)
    return samples


def _parse_chunks(data: bytes):
    """Yield (chunk_id, payload) over a RIFF body, skipping pad bytes."""
    pos = 12
    n = len(data)
    while pos + 8 <= n:
        cid, size = struct.unpack_from("<4sI", data, pos)
        pos += 8
        payload = data[pos : pos + size]
        if len(payload) < size:
            raise FormatError(f"chunk {cid!r} truncated ({len(payload)} of {size} bytes)")
        yield cid, payload
        pos += size + (size & 1)  # chunks are word-aligned


def read_wav(path) -> AudioClip:
    """Read a WAV file as a mono, peak-limited AudioClip.

    PCM16 values map to v / 32768; stereo channels are averaged.  Extra
    chunks (LIST, fact, ...) are ignored.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for cid, chunk in _parse_chunks(data):
        if cid == b"fmt " and fmt is None:
            if len(chunk) < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", chunk, 0)
        elif cid == b"data" and payload is None:
            payload = chunk
    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise FormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedError(f"{path}: {channels} channels (only 1 or 2 supported)")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
        samples = raw.astype(np.float64) / PCM16_SCALE
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedError(
            f"{path}: format tag {audio_format} with {bits} bits not supported"
        )
    if channels == 2:
        samples = samples[: len(samples) // 2 * 2].reshape(-1, 2).mean(axis=1)
    return AudioClip(peak_normalize(samples), rate)


def write_wav(clip: AudioClip, path, encoding: str = "float32") -> None:
    """Write a clip as PCM16 or IEEE float32 WAV.

    float32 round-trips the float32-representable samples exactly; pcm16
    quantizes to 1/32768 steps (values outside [-1, 1) saturate).
    """
    if encoding == "pcm16":
        scaled = np.round(clip.samples * PCM16_SCALE)
        payload = np.clip(scaled, -32768, 32767).astype("<i2").tobytes()
        fmt_tag, bits = 1, 16
    elif encoding == "float32":
        payload = clip.samples.astype("<f4").tobytes()
        fmt_tag, bits = 3, 32
    else:
        raise ContractError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", fmt_tag, 1, clip.sample_rate_hz,
        clip.sample_rate_hz * block_align, block_align, bits,
    )
    chunks = [(b"fmt ", fmt_chunk)]
    if fmt_tag == 3:
        chunks.append((b"fact", struct.pack("<I", len(clip.samples))))
    chunks.append((b"data", payload))

    body = b"WAVE"
    for cid, chunk in chunks:
        body += cid + struct.pack("<I", len(chunk)) + chunk
        if len(chunk) & 1:
            body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def _kaiser(u: np.ndarray, beta: float) -> np.ndarray:
    """Continuous Kaiser window on u in [-1, 1], zero outside."""
    inside = np.abs(u) <= 1.0
    w = np.zeros_like(u)
    w[inside] = np.i0(beta * np.sqrt(1.0 - u[inside] ** 2)) / np.i0(beta)
    return w


def resample(clip: AudioClip, target_rate_hz: int, taps_per_side: int = 16,
             kaiser_beta: float = 8.0) -> AudioClip:
    """Rate-convert with windowed-sinc interpolation.

    The sinc is lowpassed to the narrower of the two Nyquist rates and each
    output sample's tap set is renormalized to unit sum, so constants (and
    DC generally) pass through unchanged.
    """
    if int(target_rate_hz) <= 0:
        raise ContractError(f"target rate must be positive, got {target_rate_hz}")
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz == clip.sample_rate_hz:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz)

    n_in = len(clip.samples)
    n_out = int(round(n_in * target_rate_hz / clip.sample_rate_hz))
    if n_in == 0 or n_out == 0:
        return AudioClip(np.zeros(n_out), target_rate_hz)

    ratio = target_rate_hz / clip.sample_rate_hz
    cutoff = min(1.0, ratio)
    half = taps_per_side / cutoff  # support half-width in input samples

    out = np.empty(n_out)
    # per-output-sample tap positions; done in blocks to bound memory
    block = max(1, int(2_000_000 / (2 * half + 2)))
    offsets = np.arange(int(np.ceil(2 * half)) + 1)
    for start in range(0, n_out, block):
        j = np.arange(start, min(start + block, n_out))
        t = j / ratio  # position in input index space
        first = np.ceil(t - half).astype(np.int64)
        m = first[:, None] + offsets[None, :]
        d = t[:, None] - m
        taps = cutoff * np.sinc(cutoff * d) * _kaiser(d / half, kaiser_beta)
        valid = (m >= 0) & (m < n_in)
        taps = np.where(valid, taps, 0.0)
        sums = taps.sum(axis=1)
        sums[sums == 0.0] = 1.0
        taps /= sums[:, None]
        src = clip.samples[np.clip(m, 0, n_in - 1)]
        out[j] = np.sum(taps * src, axis=1)
    return AudioClip(out, target_rate_hz)


def pad_to_multiple(clip: AudioClip, multiple: int) -> tuple[AudioClip, int]:
    """Zero-pad the tail so len % multiple == 0; also return the original length."""
    if int(multiple) < 1:
        raise ContractError(f"multiple must be >= 1, got {multiple}")
    multiple = int(multiple)
    n = len(clip.samples)
    remainder = n % multiple
    if remainder == 0:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz), n
    padded = np.concatenate([clip.samples, np.zeros(multiple - remainder)])
    return AudioClip(padded, clip.sample_rate_hz), n
