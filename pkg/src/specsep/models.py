"""Diagonal-Gaussian HMM speaker models: likelihood evaluation, VQ-based
initialization, multi-utterance Baum-Welch training, and persistence.

Log-probability convention: model parameters (pi, trans) and all
likelihoods are natural-log; the spectral features themselves stay in
log10-magnitude units.  The two bases never mix.
"""

from dataclasses import dataclass, field

import numpy as np

from .quantize import Codebook, VARIANCE_FLOOR

LOG_2PI = float(np.log(2.0 * np.pi))
PI_FLOOR = 1e-6
MODEL_MAGIC = "specsep-model"
MODEL_VERSION = 1

BW_DEFAULT_REL_TOL = 1e-5
BW_DEFAULT_MAX_ITERS = 15


class ModelMismatchError(ValueError):
    """A model file or object does not match what the caller expects."""


@dataclass
class DiagGaussian:
    mean: np.ndarray
    var: np.ndarray


@dataclass
class HmmModel:
    """K-state HMM with diagonal-Gaussian emissions.

    pi is the (K,) natural-log initial distribution, trans the (K, K)
    natural-log transition matrix; means/vars are (K, dim) emission
    parameters in log10-feature units.
    """

    pi: np.ndarray
    trans: np.ndarray
    means: np.ndarray
    vars: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.pi.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def state(self, j):
        return DiagGaussian(self.means[j], self.vars[j])

    def validate(self):
        if not np.isclose(np.exp(self.pi).sum(), 1.0, atol=1e-6):
            raise ValueError("initial probabilities do not sum to 1")
        rows = np.exp(self.trans).sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-6):
            raise ValueError("transition rows do not sum to 1")


def log_gaussian_diag(x, g):
    """Natural-log density of x under a diagonal Gaussian."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != g.mean.shape:
        raise ValueError(
            f"dimension mismatch: x {x.shape} vs mean {g.mean.shape}")
    z2 = (x - g.mean) ** 2 / g.var
    return float(-0.5 * np.sum(z2 + np.log(g.var) + LOG_2PI))


def _log_emission_matrix(frames, means, variances):
    """(R, K) natural-log emission likelihoods for a frame sequence."""
    diff = frames[:, None, :] - means[None, :, :]          # (R, K, dim)
    z2 = (diff ** 2 / variances[None, :, :]).sum(axis=2)
    const = (np.log(variances) + LOG_2PI).sum(axis=1)      # (K,)
    return -0.5 * (z2 + const[None, :])


def init_hmm_from_codebook(cb):
    """Seed an HMM from a trained codebook.

    State means/variances come from the codevectors and cluster variances;
    initial probabilities are occupancy fractions (floored at PI_FLOOR and
    renormalized); transitions start uniform at 1/K.
    """
    K = cb.K
    occ = np.asarray(cb.occupancy, dtype=np.float64)
    pi = occ / occ.sum()
    pi = np.maximum(pi, PI_FLOOR)
    pi /= pi.sum()
    trans = np.full((K, K), 1.0 / K)
    return HmmModel(
        pi=np.log(pi),
        trans=np.log(trans),
        means=cb.codevectors.copy(),
        vars=np.maximum(cb.cluster_variances, VARIANCE_FLOOR),
        meta=dict(cb.meta),
    )


def _forward_backward(frames, pi, trans, means, variances):
    """Scaled forward-backward pass for one utterance.

    Emission likelihoods are renormalized by their per-frame maximum before
    exponentiation, and alpha is rescaled per frame, so probabilities on
    the order of exp(-460) never underflow.  Returns per-frame state
    posteriors gamma (R, K), expected transition counts xi_sum (K, K), and
    the utterance natural-log likelihood.
    """
    R, K = frames.shape[0], pi.shape[0]
    logB = _log_emission_matrix(frames, means, variances)
    shift = logB.max(axis=1)
    B = np.exp(logB - shift[:, None])

    alpha = np.empty((R, K))
    scale = np.empty(R)
    alpha[0] = pi * B[0]
    scale[0] = alpha[0].sum()
    alpha[0] /= scale[0]
    for t in range(1, R):
        alpha[t] = (alpha[t - 1] @ trans) * B[t]
        scale[t] = alpha[t].sum()
        alpha[t] /= scale[t]

    beta = np.empty((R, K))
    beta[R - 1] = 1.0
    for t in range(R - 2, -1, -1):
        beta[t] = trans @ (B[t + 1] * beta[t + 1]) / scale[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)

    xi_sum = np.zeros((K, K))
    for t in range(R - 1):
        xi = (alpha[t][:, None] * trans) * (B[t + 1] * beta[t + 1])[None, :]
        xi /= xi.sum()
        xi_sum += xi

    loglik = float(np.log(scale).sum() + shift.sum())
    return gamma, xi_sum, loglik


def baum_welch(utterances, init, rel_tol=BW_DEFAULT_REL_TOL,
               max_iters=BW_DEFAULT_MAX_ITERS):
    """EM reestimation of an HMM over multiple utterances.

    Parameters
    ----------
    utterances : list of (R_u, dim) frame arrays
    init : starting HmmModel
    rel_tol : terminate when |LL_t - LL_{t-1}| < rel_tol * |LL_{t-1}|
    max_iters : iteration cap

    Per-utterance accumulators are pooled before each M-step; variances
    are floored after every update.  Returns (model, loglik_trace) where
    loglik_trace[t] is the total log-likelihood of the parameters entering
    iteration t; the trace is non-decreasing up to numerical slack.
    """
    utterances = [np.asarray(u, dtype=np.float64) for u in utterances]
    utterances = [u for u in utterances if u.shape[0] > 0]
    if not utterances:
        raise ValueError("empty training set")
    dim = utterances[0].shape[1]
    if any(u.shape[1] != dim for u in utterances):
        raise ValueError("inconsistent frame dimensions across utterances")
    if init.dim != dim:
        raise ModelMismatchError(
            f"model dimension {init.dim} does not match frames ({dim})")

    K = init.K
    pi = np.exp(init.pi)
    trans = np.exp(init.trans)
    means = init.means.copy()
    variances = init.vars.copy()

    trace = []
    prev_ll = None
    for _ in range(max_iters):
        pi_acc = np.zeros(K)
        xi_acc = np.zeros((K, K))
        gamma_acc = np.zeros(K)          # over all frames, for mean/var
        gamma_trans_acc = np.zeros(K)    # over frames 1..R-1, for rows
        mean_acc = np.zeros((K, dim))
        sq_acc = np.zeros((K, dim))
        total_ll = 0.0
        for frames in utterances:
            gamma, xi_sum, ll = _forward_backward(
                frames, pi, trans, means, variances)
            total_ll += ll
            pi_acc += gamma[0]
            xi_acc += xi_sum
            gamma_acc += gamma.sum(axis=0)
            gamma_trans_acc += gamma[:-1].sum(axis=0)
            mean_acc += gamma.T @ frames
            sq_acc += gamma.T @ (frames ** 2)
        trace.append(total_ll)

        if prev_ll is not None and abs(total_ll - prev_ll) < rel_tol * abs(prev_ll):
            break
        prev_ll = total_ll

        pi = pi_acc / pi_acc.sum()
        row_mass = gamma_trans_acc[:, None]
        trans = np.where(row_mass > 0, xi_acc / np.maximum(row_mass, 1e-300),
                         1.0 / K)
        trans /= trans.sum(axis=1, keepdims=True)
        occupied = gamma_acc > 0
        denom = np.maximum(gamma_acc, 1e-300)[:, None]
        new_means = mean_acc / denom
        new_vars = sq_acc / denom - new_means ** 2
        means = np.where(occupied[:, None], new_means, means)
        variances = np.where(occupied[:, None], new_vars, variances)
        variances = np.maximum(variances, VARIANCE_FLOOR)

    model = HmmModel(
        pi=np.log(np.maximum(pi, 1e-300)),
        trans=np.log(np.maximum(trans, 1e-300)),
        means=means,
        vars=variances,
        meta=dict(init.meta),
    )
    return model, trace


def _meta_to_arrays(meta):
    keys = sorted(meta)
    return (np.array(keys, dtype="U64"),
            np.array([str(meta[k]) for k in keys], dtype="U64"))


def _meta_from_arrays(keys, values):
    meta = {}
    for k, v in zip(keys.tolist(), values.tolist()):
        try:
            num = float(v)
            meta[k] = int(num) if num == int(num) else num
        except ValueError:
            meta[k] = v
    return meta


def save_model(model, path):
    """Persist an HmmModel or Codebook to a versioned .npz container.

    Layout (see README): magic, version, kind ("hmm" | "vq"), K, dim,
    string-coded metadata, then the parameter arrays as little-endian
    float64 (exact round trip).
    """
    if isinstance(model, HmmModel):
        kind = "hmm"
        arrays = dict(pi=model.pi, trans=model.trans,
                      means=model.means, variances=model.vars)
        K, dim = model.K, model.dim
    elif isinstance(model, Codebook):
        kind = "vq"
        arrays = dict(codevectors=model.codevectors,
                      cluster_variances=model.cluster_variances,
                      occupancy=model.occupancy.astype("<i8"))
        K, dim = model.K, model.dim
    else:
        raise TypeError(f"cannot save object of type {type(model).__name__}")
    meta_keys, meta_values = _meta_to_arrays(model.meta)
    arrays = {k: (v.astype("<f8") if v.dtype.kind == "f" else v)
              for k, v in arrays.items()}
    # write through a handle so numpy does not append ".npz" to the path
    with open(path, "wb") as f:
        np.savez(f,
                 magic=np.array(MODEL_MAGIC),
                 version=np.array(MODEL_VERSION, dtype="<i8"),
                 kind=np.array(kind),
                 K=np.array(K, dtype="<i8"),
                 dim=np.array(dim, dtype="<i8"),
                 meta_keys=meta_keys,
                 meta_values=meta_values,
                 **arrays)


def load_model(path, expect_kind=None, expect_dim=None):
    """Load a model container; optionally enforce kind ("hmm"/"vq") and
    feature dimension."""
    with np.load(path, allow_pickle=False) as data:
        if "magic" not in data or str(data["magic"]) != MODEL_MAGIC:
            raise ModelMismatchError(f"{path}: not a model file")
        version = int(data["version"])
        if version != MODEL_VERSION:
            raise ModelMismatchError(
                f"{path}: unsupported model version {version}")
        kind = str(data["kind"])
        dim = int(data["dim"])
        if expect_kind is not None and kind != expect_kind:
            raise ModelMismatchError(
                f"{path}: model kind is '{kind}' but '{expect_kind}' "
                "was expected")
        if expect_dim is not None and dim != expect_dim:
            raise ModelMismatchError(
                f"{path}: model dimension {dim} does not match "
                f"configured dimension {expect_dim}")
        meta = _meta_from_arrays(data["meta_keys"], data["meta_values"])
        if kind == "hmm":
            return HmmModel(pi=data["pi"], trans=data["trans"],
                            means=data["means"], vars=data["variances"],
                            meta=meta)
        if kind == "vq":
            return Codebook(codevectors=data["codevectors"],
                            cluster_variances=data["cluster_variances"],
                            occupancy=data["occupancy"], meta=meta)
    raise ModelMismatchError(f"{path}: unknown model kind '{kind}'")
