"""Time-domain framing, log-spectral analysis, binary-mask filtering with
overlap-add synthesis, and 16-bit PCM mono WAV I/O."""

import wave
from dataclasses import dataclass

import numpy as np

DEFAULT_SAMPLE_RATE = 8000


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("mono required")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FramingConfig:
    """Analysis/synthesis parameters.

    Defaults follow 8 kHz operation: 32 ms Hamming analysis frames with a
    10 ms hop, a 256-point DFT (129 retained bins), and Hann synthesis
    windows for overlap-add.
    """

    frame_len: int = 256
    hop: int = 80
    dft_size: int = 256
    log_floor: float = 1e-10

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.dft_size):
            raise ValueError("need 0 < hop <= frame_len <= dft_size")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be positive")

    @property
    def n_bins(self):
        return self.dft_size // 2 + 1

    def analysis_window(self):
        return np.hamming(self.frame_len)

    def synthesis_window(self):
        return np.hanning(self.frame_len)

    def frames_per_second(self, sample_rate):
        return sample_rate / self.hop


def num_frames(n_samples, cfg):
    """Frame count for a signal of n_samples; short signals pad to one."""
    if n_samples < cfg.frame_len:
        return 1
    return (n_samples - cfg.frame_len) // cfg.hop + 1


def frame_signal(signal, cfg):
    """Split a signal into overlapping frames.

    Frame r (0-based) covers samples [r*hop, r*hop + frame_len).  A signal
    shorter than one frame is zero-padded to a single frame.  Returns an
    (R, frame_len) array.
    """
    x = np.asarray(signal.samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty input")
    if x.size < cfg.frame_len:
        padded = np.zeros(cfg.frame_len)
        padded[: x.size] = x
        return padded[None, :]
    R = num_frames(x.size, cfg)
    frames = np.empty((R, cfg.frame_len))
    for r in range(R):
        frames[r] = x[r * cfg.hop : r * cfg.hop + cfg.frame_len]
    return frames


def log_spectrum(frame, cfg):
    """log10 magnitude spectrum of one analysis frame (bins 0..D/2).

    The frame is Hamming-windowed, transformed with a D-point DFT, and the
    magnitude is floored at cfg.log_floor so the result is always finite.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (cfg.frame_len,):
        raise ValueError(
            f"expected frame of length {cfg.frame_len}, got {frame.shape}")
    spec = np.fft.rfft(frame * cfg.analysis_window(), n=cfg.dft_size)
    mag = np.maximum(np.abs(spec), cfg.log_floor)
    return np.log10(mag)


def log_spectra(signal, cfg):
    """Frame a signal and return its (R, D/2+1) log-spectral matrix."""
    frames = frame_signal(signal, cfg)
    win = cfg.analysis_window()
    spec = np.fft.rfft(frames * win, n=cfg.dft_size, axis=1)
    mag = np.maximum(np.abs(spec), cfg.log_floor)
    return np.log10(mag)


def apply_masks_and_reconstruct(mixture, masks_x, masks_v, cfg):
    """Filter the mixture with per-frame binary masks and resynthesize.

    Each analysis frame is Hamming-windowed and transformed; the mask
    (defined on bins 0..D/2) multiplies the half spectrum, which the inverse
    real DFT mirrors conjugate-symmetrically onto the upper bins.  Frames
    are Hann-windowed and overlap-added, then divided by the accumulated
    analysis*synthesis window envelope (floored at 1e-3) so that all-ones
    masks reconstruct the input essentially exactly away from the edges.

    Returns (x_hat, v_hat) as AudioSignals of length (R-1)*hop + frame_len.
    """
    frames = frame_signal(mixture, cfg)
    R = frames.shape[0]
    masks_x = np.asarray(masks_x, dtype=np.float64)
    masks_v = np.asarray(masks_v, dtype=np.float64)
    if masks_x.shape[0] != R or masks_v.shape[0] != R:
        raise ValueError(
            f"mask count ({masks_x.shape[0]}, {masks_v.shape[0]}) does not "
            f"match frame count {R}")
    if masks_x.shape[1] != cfg.n_bins or masks_v.shape[1] != cfg.n_bins:
        raise ValueError("mask dimension does not match DFT bins")

    win_a = cfg.analysis_window()
    win_s = cfg.synthesis_window()
    spec = np.fft.rfft(frames * win_a, n=cfg.dft_size, axis=1)

    out_len = (R - 1) * cfg.hop + cfg.frame_len
    out_x = np.zeros(out_len)
    out_v = np.zeros(out_len)
    envelope = np.zeros(out_len)
    # inverse DFT of a masked half spectrum is real by construction
    frames_x = np.fft.irfft(spec * masks_x, n=cfg.dft_size, axis=1)
    frames_v = np.fft.irfft(spec * masks_v, n=cfg.dft_size, axis=1)
    for r in range(R):
        lo = r * cfg.hop
        hi = lo + cfg.frame_len
        out_x[lo:hi] += frames_x[r, : cfg.frame_len] * win_s
        out_v[lo:hi] += frames_v[r, : cfg.frame_len] * win_s
        envelope[lo:hi] += win_a * win_s
    envelope = np.maximum(envelope, 1e-3)
    out_x /= envelope
    out_v /= envelope
    return (AudioSignal(out_x, mixture.sample_rate),
            AudioSignal(out_v, mixture.sample_rate))


def read_wav(path, expected_rate=None):
    """Read a 16-bit PCM mono WAV file, scaling samples to [-1, 1].

    With expected_rate set, a file at any other rate is rejected; pass
    expected_rate=None to accept whatever rate the file carries.
    """
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError("mono required")
        if w.getsampwidth() != 2:
            raise ValueError(
                f"unsupported bit depth: {8 * w.getsampwidth()}-bit "
                "(16-bit PCM required)")
        rate = w.getframerate()
        if expected_rate is not None and rate != expected_rate:
            raise ValueError(
                f"sample rate mismatch: file is {rate} Hz, "
                f"expected {expected_rate} Hz")
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples, rate)


def write_wav(path, signal):
    """Write an AudioSignal as 16-bit PCM mono WAV (clipped to [-1, 1])."""
    x = np.clip(signal.samples, -1.0, 1.0)
    # scale by 2^15 and clip the top code so the round trip stays within
    # one quantization step everywhere, including x = +/-1
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(pcm.tobytes())
