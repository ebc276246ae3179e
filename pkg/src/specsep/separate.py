"""End-to-end separation: infer state/codevector paths and the gain ratio,
build per-frame binary masks from the decoded spectral prototypes, and
reconstruct both sources from the mixture."""

import math

import numpy as np

from . import decode as _decode
from .gain import GainContext, estimate_gy, g_of_theta
from .models import HmmModel, ModelMismatchError
from .quantize import Codebook, gvq_score
from .signal import apply_masks_and_reconstruct, log_spectra

METHODS = ("gfhmm", "gvq", "fhmm", "vq")

# baseline (non-gain-adapted) runs force g_y/G0 = sqrt(2) at theta = 0,
# which makes both source gains exactly 1
BASELINE_GY_OVER_G0 = math.sqrt(2.0)

MEGA_FRAME_SECONDS = 2.0


def _masks_from_prototypes(proto_x, proto_v, theta_hat, ctx):
    """Per-frame binary masks: a bin goes to the target wherever its
    gain-shifted prototype is at least the interference's (ties included)."""
    gx = g_of_theta(theta_hat, ctx)
    gv = g_of_theta(-theta_hat, ctx)
    masks_x = ((proto_x + gx) >= (proto_v + gv)).astype(np.uint8)
    return masks_x, (1 - masks_x).astype(np.uint8)


def build_hmm_masks(result, lambda_x, lambda_v, ctx):
    """Masks from the decoded HMM state means (one mask pair per frame)."""
    return _masks_from_prototypes(lambda_x.means[result.path_x],
                                  lambda_v.means[result.path_v],
                                  result.theta_hat, ctx)


def build_vq_masks(index_sequences, cb_x, cb_v, ctx, theta_hat):
    """Masks from the decoded codevectors (one mask pair per frame)."""
    idx_x, idx_v = index_sequences
    return _masks_from_prototypes(cb_x.codevectors[np.asarray(idx_x)],
                                  cb_v.codevectors[np.asarray(idx_v)],
                                  theta_hat, ctx)


def _masks_per_chunk(result, proto_x_all, proto_v_all, chunks, ctx):
    """Mask building honoring a per-mega-frame theta."""
    R = len(result.path_x)
    masks_x = np.empty((R, proto_x_all.shape[1]), dtype=np.uint8)
    for sl, th in zip(chunks, result.theta_per_chunk):
        mx, _ = _masks_from_prototypes(proto_x_all[sl], proto_v_all[sl],
                                       th, ctx)
        masks_x[sl] = mx
    return masks_x, (1 - masks_x).astype(np.uint8)


def _require_kind(model, cls, role, method):
    if not isinstance(model, cls):
        raise ModelMismatchError(
            f"method '{method}' needs a {cls.__name__} for the {role} "
            f"speaker, got {type(model).__name__}")


def separate(mixture, model_x, model_v, cfg, method="gfhmm", theta0=0.0,
             fix_theta=None, gy_over_g0=None, outer_tol=None,
             max_outer=None, mega_frame_seconds=MEGA_FRAME_SECONDS):
    """Separate a two-speaker mixture into target and interference.

    Parameters
    ----------
    mixture : AudioSignal
    model_x, model_v : HmmModel (gfhmm/fhmm) or Codebook (gvq/vq)
    cfg : FramingConfig
    method : "gfhmm" | "gvq" | "fhmm" | "vq"; the latter two are the
        non-gain-adapted baselines, realized as the same decoders with
        theta frozen at 0 and both gains forced to 1
    theta0 : starting theta for the alternating estimation (dB)
    fix_theta : skip theta estimation and decode at this value (dB)
    gy_over_g0 : override the estimated g_y/G0 ratio (testing hook; the
        baselines set it to sqrt(2) internally)
    mega_frame_seconds : loudness-constancy window; utterances shorter
        than twice this get a single theta

    Returns (x_hat, v_hat, diagnostics); diagnostics carries theta_hat,
    iterations, the decoder score, and the decoded index paths.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}' (one of {METHODS})")
    hmm_based = method in ("gfhmm", "fhmm")
    cls = HmmModel if hmm_based else Codebook
    _require_kind(model_x, cls, "target", method)
    _require_kind(model_v, cls, "interference", method)
    n_bins = cfg.n_bins
    for role, m in (("target", model_x), ("interference", model_v)):
        if m.dim != n_bins:
            raise ModelMismatchError(
                f"{role} model dimension {m.dim} does not match "
                f"configured {n_bins} bins")
        rate = m.meta.get("sample_rate")
        if rate is not None and int(rate) != mixture.sample_rate:
            raise ModelMismatchError(
                f"{role} model was trained at {rate} Hz but the mixture "
                f"is {mixture.sample_rate} Hz")

    y_seq = log_spectra(mixture, cfg)
    g_y = estimate_gy(mixture)

    baseline = method in ("fhmm", "vq")
    if baseline:
        ctx = GainContext(g_y=BASELINE_GY_OVER_G0, G0=1.0)
        fix_theta = 0.0
    else:
        ratio = gy_over_g0 if gy_over_g0 is not None else g_y
        ctx = GainContext(g_y=float(ratio), G0=1.0)

    R = y_seq.shape[0]
    frames_per_chunk = None
    if mega_frame_seconds:
        frames_per_chunk = int(round(
            mega_frame_seconds * mixture.sample_rate / cfg.hop))
    chunks = _decode.mega_frame_slices(R, frames_per_chunk)

    infer_kwargs = {"theta0": theta0, "mega_frames": chunks}
    if outer_tol is not None:
        infer_kwargs["outer_tol"] = outer_tol
    if max_outer is not None:
        infer_kwargs["max_outer"] = max_outer

    if hmm_based:
        if fix_theta is not None:
            result = _decode.parallel_viterbi(
                y_seq, model_x, model_v, fix_theta, ctx)
            chunks = [slice(0, R)]
        else:
            result = _decode.gfhmm_infer(y_seq, model_x, model_v, ctx,
                                         **infer_kwargs)
        proto_x = model_x.means[result.path_x]
        proto_v = model_v.means[result.path_v]
    else:
        if fix_theta is not None:
            idx_x, idx_v, q = gvq_score(y_seq, model_x, model_v,
                                        fix_theta, ctx)
            result = _decode.DecodeResult(
                idx_x, idx_v, q, theta_hat=float(fix_theta), iterations=1,
                theta_per_chunk=(float(fix_theta),))
            chunks = [slice(0, R)]
        else:
            result = _decode.gvq_infer(y_seq, model_x, model_v, ctx,
                                       **infer_kwargs)
        proto_x = model_x.codevectors[result.path_x]
        proto_v = model_v.codevectors[result.path_v]

    masks_x, masks_v = _masks_per_chunk(result, proto_x, proto_v, chunks, ctx)
    x_hat, v_hat = apply_masks_and_reconstruct(mixture, masks_x, masks_v, cfg)

    diagnostics = {
        "method": method,
        "theta_hat": result.theta_hat,
        "theta_per_chunk": list(result.theta_per_chunk),
        "iterations": result.iterations,
        "logprob": result.logprob,
        "g_y": g_y,
        "path_x": result.path_x,
        "path_v": result.path_v,
        "n_frames": R,
    }
    return x_hat, v_hat, diagnostics
