"""Mixture fabrication at controlled target-to-interference ratios, SNR
scoring, synthetic source generation, and the batch experiment runner that
writes one CSV row per (pair, theta, method) run."""

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .gain import estimate_gy
from .models import load_model
from .separate import separate
from .signal import AudioSignal, FramingConfig, read_wav

SNR_CAP_DB = 100.0

CSV_COLUMNS = ["pair_id", "method", "theta_true", "theta_hat", "iterations",
               "snr_target_db", "snr_interf_db", "logprob", "wall_ms",
               "error"]


def normalize_equal_power(x, v):
    """Scale both signals to unit RMS (the equal-power convention)."""
    out = []
    for sig in (x, v):
        rms = estimate_gy(sig)          # raises on silent input
        out.append(AudioSignal(sig.samples / rms, sig.sample_rate))
    return out[0], out[1]


def mix_at_tir(x, v, theta):
    """Mix two unit-RMS sources at a target-to-interference ratio (dB).

    Gains satisfy gx^2 + gv^2 = 1, so the mixture RMS stays near the
    nominal source level.  Returns (mixture, gx, gv); the scaled
    components gx*x and gv*v are the references for SNR scoring.
    """
    n = min(len(x), len(v))
    if n == 0:
        raise ValueError("empty input")
    if x.sample_rate != v.sample_rate:
        raise ValueError("sample rate mismatch between sources")
    gx = (1.0 + 10.0 ** (-theta / 10.0)) ** -0.5
    gv = (1.0 + 10.0 ** (theta / 10.0)) ** -0.5
    y = gx * x.samples[:n] + gv * v.samples[:n]
    return AudioSignal(y, x.sample_rate), gx, gv


def snr(reference, estimate):
    """10*log10 of reference power over residual power, in dB.

    Signals are trimmed to the shorter length.  Capped at +100 dB once the
    residual drops below 1e-10 of the reference power.
    """
    n = min(len(reference), len(estimate))
    ref = reference.samples[:n]
    est = estimate.samples[:n]
    ref_power = float(np.sum(ref ** 2))
    if ref_power == 0.0:
        raise ValueError("silent reference")
    resid_power = float(np.sum((ref - est) ** 2))
    if resid_power < 1e-10 * ref_power:
        return SNR_CAP_DB
    return float(10.0 * np.log10(ref_power / resid_power))


def sample_hmm_frames(model, n_frames, rng):
    """Draw a state path from (pi, a) and one log-spectral frame per state
    from the state Gaussian.  Returns (frames, states)."""
    pi = np.exp(model.pi)
    trans = np.exp(model.trans)
    states = np.empty(n_frames, dtype=np.int64)
    states[0] = rng.choice(model.K, p=pi / pi.sum())
    for r in range(1, n_frames):
        row = trans[states[r - 1]]
        states[r] = rng.choice(model.K, p=row / row.sum())
    frames = (model.means[states]
              + rng.standard_normal((n_frames, model.dim))
              * np.sqrt(model.vars[states]))
    return frames, states


def _frames_to_signal(log_frames, cfg, sample_rate, rng):
    """Synthesize a waveform from log-spectral frames via random phase and
    Hann overlap-add."""
    R, n_bins = log_frames.shape
    out_len = (R - 1) * cfg.hop + cfg.frame_len
    out = np.zeros(out_len)
    win = cfg.synthesis_window()
    for r in range(R):
        mag = 10.0 ** log_frames[r]
        phase = rng.uniform(0.0, 2.0 * np.pi, n_bins)
        phase[0] = 0.0
        phase[-1] = 0.0                 # DC and Nyquist stay real
        spec = mag * np.exp(1j * phase)
        frame = np.fft.irfft(spec, n=cfg.dft_size)[: cfg.frame_len]
        out[r * cfg.hop : r * cfg.hop + cfg.frame_len] += frame * win
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out / peak * 0.5
    return AudioSignal(out, sample_rate)


def synth_source(kind, model=None, seed=0, duration=2.0,
                 sample_rate=8000, cfg=None, speaker=0):
    """Deterministic synthetic test source.

    kind "hmm_sample": draw a state path from the model's (pi, a) and one
    log-spectral frame per state from its Gaussian, then synthesize with
    random phase and overlap-add (model required).  kind "tonal": a sum of
    harmonics of a speaker-specific fundamental, so different speakers
    occupy disjoint DFT bins.  kind "filtered_noise": white noise shaped
    by a fixed speaker-specific spectral envelope.
    """
    rng = np.random.default_rng(seed)
    cfg = cfg or FramingConfig()
    n = int(round(duration * sample_rate))

    if kind == "hmm_sample":
        if model is None:
            raise ValueError("hmm_sample needs a model")
        R = max(1, (n - cfg.frame_len) // cfg.hop + 1)
        frames, _ = sample_hmm_frames(model, R, rng)
        return _frames_to_signal(frames, cfg, sample_rate, rng)

    t = np.arange(n) / sample_rate
    if kind == "tonal":
        # speaker s uses bins (8 + 5s), 2*(8 + 5s), 3*(8 + 5s): disjoint
        # dominant bins across small speaker ids
        base_bin = 8 + 5 * speaker
        f0 = base_bin * sample_rate / cfg.dft_size
        x = np.zeros(n)
        for h, amp in ((1, 1.0), (2, 0.5), (3, 0.25)):
            phase = rng.uniform(0, 2 * np.pi)
            x += amp * np.sin(2 * np.pi * h * f0 * t + phase)
        # slow amplitude modulation keeps frames from being identical
        x *= 0.7 + 0.3 * np.sin(2 * np.pi * (1.0 + 0.3 * speaker) * t
                                + rng.uniform(0, 2 * np.pi))
        return AudioSignal(0.3 * x / np.max(np.abs(x)), sample_rate)

    if kind == "filtered_noise":
        noise = rng.standard_normal(n)
        spec = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        centers = 400.0 + 900.0 * speaker, 1400.0 + 900.0 * speaker
        envelope = np.full_like(freqs, 1e-3)
        for fc in centers:
            envelope += np.exp(-0.5 * ((freqs - fc) / 150.0) ** 2)
        shaped = np.fft.irfft(spec * envelope, n=n)
        peak = np.max(np.abs(shaped))
        return AudioSignal(0.3 * shaped / peak, sample_rate)

    raise ValueError(f"unknown source kind '{kind}'")


def _resolve_source(spec_entry, sample_rate, cfg, default_seed=0):
    """Materialize one manifest source entry (wav path or synth spec)."""
    if "wav" in spec_entry:
        return read_wav(spec_entry["wav"], expected_rate=sample_rate)
    if "synth" in spec_entry:
        s = dict(spec_entry["synth"])
        kind = s.pop("kind")
        s.setdefault("seed", default_seed)
        model = None
        if "model" in s:
            model = load_model(s.pop("model"), expect_kind="hmm")
        return synth_source(kind, model=model, sample_rate=sample_rate,
                            cfg=cfg, **s)
    raise ValueError(f"source entry needs 'wav' or 'synth': {spec_entry}")


def _run_single(pair, theta, method, models, cfg, options):
    """One (pair, theta, method) run; never raises, returns a row dict."""
    row = {"pair_id": pair["id"], "method": method, "theta_true": theta,
           "theta_hat": "", "iterations": "", "snr_target_db": "",
           "snr_interf_db": "", "logprob": "", "wall_ms": "", "error": ""}
    t0 = time.perf_counter()
    try:
        if pair.get("error"):
            raise RuntimeError(pair["error"])
        if isinstance(models[method], str):
            raise RuntimeError(models[method])
        x, v = pair["target_signal"], pair["interf_signal"]
        mixture, gx, gv = mix_at_tir(x, v, theta)
        model_x, model_v = models[method]
        x_hat, v_hat, diag = separate(mixture, model_x, model_v, cfg,
                                      method=method, **options)
        ref_x = AudioSignal(gx * x.samples[: len(mixture)], x.sample_rate)
        ref_v = AudioSignal(gv * v.samples[: len(mixture)], v.sample_rate)
        row["theta_hat"] = f"{diag['theta_hat']:.4f}"
        row["iterations"] = diag["iterations"]
        row["snr_target_db"] = f"{snr(ref_x, x_hat):.4f}"
        row["snr_interf_db"] = f"{snr(ref_v, v_hat):.4f}"
        row["logprob"] = f"{diag['logprob']:.6g}"
    except Exception as exc:  # noqa: BLE001 - errors become CSV rows
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_ms"] = f"{(time.perf_counter() - t0) * 1e3:.1f}"
    return row


def load_manifest(path):
    with open(path) as f:
        return json.load(f)


def run_experiment(manifest, out_csv, jobs=None):
    """Run the full (pairs x theta grid x methods) batch.

    manifest is a dict (or a path to a JSON file) with keys: sample_rate,
    framing {frame_len, hop, dft_size}, theta_grid, methods, models
    {hmm_x, hmm_v, vq_x, vq_v}, pairs [{id, target, interf}], and optional
    separate options (theta0, fix_theta).  Failing runs land in the CSV
    with an error column rather than aborting the batch.  Returns a
    summary dict of per-(theta, method) means.
    """
    if not isinstance(manifest, dict):
        manifest = load_manifest(manifest)
    sample_rate = int(manifest.get("sample_rate", 8000))
    fr = manifest.get("framing", {})
    cfg = FramingConfig(frame_len=int(fr.get("frame_len", 256)),
                        hop=int(fr.get("hop", 80)),
                        dft_size=int(fr.get("dft_size", 256)))
    theta_grid = [float(t) for t in manifest["theta_grid"]]
    methods = list(manifest["methods"])
    options = {k: manifest[k] for k in ("theta0", "fix_theta")
               if k in manifest}

    model_paths = manifest["models"]
    n_bins = cfg.n_bins
    loaded = {}
    for method in methods:
        kind = "hmm" if method in ("gfhmm", "fhmm") else "vq"
        try:
            mx = _load_cached(loaded, model_paths[f"{kind}_x"], kind, n_bins)
            mv = _load_cached(loaded, model_paths[f"{kind}_v"], kind, n_bins)
            loaded[method] = (mx, mv)
        except Exception as exc:  # noqa: BLE001 - bad models become rows
            loaded[method] = f"{type(exc).__name__}: {exc}"

    default_seed = int(manifest.get("seed", 0))
    pairs = []
    for idx, entry in enumerate(manifest["pairs"]):
        try:
            x = _resolve_source(entry["target"], sample_rate, cfg,
                                default_seed + 2 * idx)
            v = _resolve_source(entry["interf"], sample_rate, cfg,
                                default_seed + 2 * idx + 1)
            x, v = normalize_equal_power(x, v)
            pairs.append({"id": entry["id"], "target_signal": x,
                          "interf_signal": v})
        except Exception as exc:  # noqa: BLE001 - bad pairs become rows
            pairs.append({"id": entry["id"],
                          "error": f"{type(exc).__name__}: {exc}"})

    tasks = [(pair, theta, method)
             for pair in pairs for theta in theta_grid for method in methods]
    jobs = jobs or int(manifest.get("jobs", 1))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                lambda t: _run_single(t[0], t[1], t[2], loaded, cfg, options),
                tasks))
    else:
        rows = [_run_single(p, th, m, loaded, cfg, options)
                for p, th, m in tasks]

    rows.sort(key=lambda r: (r["pair_id"], float(r["theta_true"]),
                             r["method"]))
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return summarize_rows(rows)


def _load_cached(cache, path, kind, n_bins):
    key = (path, kind)
    if key not in cache:
        cache[key] = load_model(path, expect_kind=kind, expect_dim=n_bins)
    return cache[key]


def summarize_rows(rows):
    """Per-(theta, method) means of the numeric result columns."""
    groups = {}
    for row in rows:
        if row["error"]:
            continue
        key = (float(row["theta_true"]), row["method"])
        groups.setdefault(key, []).append(row)
    summary = {}
    for (theta, method), grp in sorted(groups.items()):
        summary[(theta, method)] = {
            "n": len(grp),
            "snr_target_db": float(np.mean(
                [float(r["snr_target_db"]) for r in grp])),
            "snr_interf_db": float(np.mean(
                [float(r["snr_interf_db"]) for r in grp])),
            "theta_hat": float(np.mean(
                [float(r["theta_hat"]) for r in grp])),
            "iterations": float(np.mean(
                [float(r["iterations"]) for r in grp])),
        }
    return summary


def write_report(results_csv, out_csv):
    """Aggregate a results CSV into mean-SNR-vs-theta and theta_hat-vs-theta
    series per method."""
    with open(results_csv, newline="") as f:
        rows = [row for row in csv.DictReader(f)]
    summary = summarize_rows(rows)
    n_errors = sum(1 for r in rows if r["error"])
    with open(out_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "theta_true", "n", "mean_snr_target_db",
                         "mean_snr_interf_db", "mean_theta_hat",
                         "mean_iterations"])
        for (theta, method), stats in sorted(
                summary.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            writer.writerow([method, theta, stats["n"],
                             f"{stats['snr_target_db']:.4f}",
                             f"{stats['snr_interf_db']:.4f}",
                             f"{stats['theta_hat']:.4f}",
                             f"{stats['iterations']:.2f}"])
    return {"rows": len(rows), "errors": n_errors,
            "series": len(summary)}
