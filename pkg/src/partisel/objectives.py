"""Benchmark set functions and the dense linear algebra they need.

All objectives are immutable after construction and evaluate batches of
membership masks, so they are safe to share across workers.  Values are
computed in float64; the coverage objective uses a float32 matmul only to
decide integer cover counts (exact up to 2**24), then sums weights in
float64.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .core import Partition, SetFunctionHandle

__all__ = [
    "spd_cholesky_det",
    "spd_inverse_trace",
    "coverage_build",
    "dpp_build",
    "median_bandwidth",
    "aoptimal_build",
    "libsvm_parse",
    "facility_location_eval",
    "facility_location_handle",
    "ekf_aoptimal_eval",
    "ekf_aoptimal_handle",
    "DISTANCE_FLOOR",
]

DISTANCE_FLOOR = 1e-6  # coincident positions would otherwise divide by zero


# ---------------------------------------------------------------------------
# dense kernels


def spd_cholesky_det(m: np.ndarray) -> float:
    """Determinant of a symmetric positive-definite matrix.

    Cholesky-based: the product of the squared factor diagonal.  Raises
    numpy.linalg.LinAlgError on non-PD input.
    """
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 1.0
    level = np.linalg.cholesky(m)
    return float(np.prod(np.diag(level)) ** 2)


def spd_inverse_trace(m: np.ndarray) -> float:
    """Trace of the inverse of an SPD matrix via its Cholesky factor."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    level = np.linalg.cholesky(m)
    inv_l = np.linalg.solve(level, np.eye(level.shape[0]))
    return float(np.sum(inv_l**2))


# ---------------------------------------------------------------------------
# special maximum coverage


def coverage_build(n: int, k: int, epsilon: float = 0.01) -> tuple[SetFunctionHandle, Partition]:
    """The adversarial coverage instance with a planted bad local optimum.

    The universe holds n-1 unit-weight primary items, n-k unit-weight bonus
    items, and n-1 items of tiny weight ``epsilon``.  Ground element i < n
    covers tiny item i (except element n-1, which covers every primary
    item); element n + i covers primary item i (except element 2n-1, which
    covers all bonus items).  Community i is the pair {i, i + n} with
    budget 1, so a feasible set keeps at most one of each pair.  The best
    feasible family is worth 2n - 1 - k, while greedy ascent stalls at
    (n - 1) * (1 + epsilon).
    """
    if n < 2 or not 1 <= k <= n or epsilon <= 0:
        raise ValueError("need n >= 2, 1 <= k <= n, epsilon > 0")
    n_x, n_y, n_eps = n - 1, n - k, n - 1
    u = n_x + n_y + n_eps
    weights = np.concatenate(
        [np.ones(n_x), np.ones(n_y), np.full(n_eps, float(epsilon))]
    )
    cover = np.zeros((2 * n, u), dtype=np.float32)
    for i in range(n - 1):
        cover[i, n_x + n_y + i] = 1.0  # tiny item i
        cover[n + i, i] = 1.0  # primary item i
    cover[n - 1, :n_x] = 1.0  # all primary items at once
    cover[2 * n - 1, n_x : n_x + n_y] = 1.0  # all bonus items

    def batch(masks: np.ndarray, _chunk: int = 256) -> np.ndarray:
        # chunked so the float32 staging buffers stay cache-resident
        out = np.empty(masks.shape[0])
        for lo in range(0, masks.shape[0], _chunk):
            part = masks[lo : lo + _chunk]
            counts = part.astype(np.float32) @ cover
            out[lo : lo + part.shape[0]] = (counts > 0.5).astype(float) @ weights
        return out

    handle = SetFunctionHandle(
        2 * n, batch, monotone=True, name=f"coverage(n={n},k={k},eps={epsilon})"
    )
    partition = Partition([[i, i + n] for i in range(n)], [1] * n)
    return handle, partition


# ---------------------------------------------------------------------------
# diversity objective for frame selection


def median_bandwidth(features: np.ndarray) -> float:
    """Median pairwise Euclidean distance (the usual kernel heuristic)."""
    features = np.asarray(features, dtype=float)
    d2 = _pairwise_sq_dists(features)
    upper = d2[np.triu_indices(d2.shape[0], k=1)]
    if upper.size == 0:
        return 1.0
    med = float(np.median(np.sqrt(np.maximum(upper, 0.0))))
    return med if med > 0 else 1.0


def _pairwise_sq_dists(features: np.ndarray) -> np.ndarray:
    sq = (features**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * features @ features.T
    return np.maximum(d2, 0.0)


def dpp_build(features: np.ndarray, bandwidth: float | None = None) -> SetFunctionHandle:
    """det(I + X_S) over a Gaussian-kernel Gramian of the feature rows.

    ``bandwidth=None`` selects the median heuristic.  The Gramian has unit
    diagonal and is validated positive semidefinite at build time.  Note
    f(empty) = 1; wrap with ``normalize_empty`` when a zero baseline is
    wanted.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("features must be a nonempty 2-d array")
    if not np.all(np.isfinite(features)):
        raise ValueError("non-finite feature values")
    h = median_bandwidth(features) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    gram = np.exp(-_pairwise_sq_dists(features) / (2.0 * h * h))
    np.linalg.cholesky(gram + 1e-9 * np.eye(gram.shape[0]))  # PSD check
    n = gram.shape[0]
    eye_plus = np.eye(n) + gram

    def batch(masks: np.ndarray) -> np.ndarray:
        out = np.empty(masks.shape[0])
        for i, row in enumerate(masks):
            idx = np.flatnonzero(row)
            out[i] = spd_cholesky_det(eye_plus[np.ix_(idx, idx)])
        return out

    return SetFunctionHandle(n, batch, monotone=True, name=f"dpp(n={n},h={h:.4g})")


# ---------------------------------------------------------------------------
# Bayesian A-optimal design


def libsvm_parse(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse 'label idx:val ...' lines (1-based indices) into a dense matrix.

    Missing indices are zero.  Malformed tokens raise ValueError with the
    offending line number.
    """
    path = Path(path)
    labels: list[float] = []
    rows: list[dict[int, float]] = []
    max_idx = 0
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                labels.append(float(tokens[0]))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad label {tokens[0]!r}") from exc
            entries: dict[int, float] = {}
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as exc:
                    raise ValueError(f"line {lineno}: bad feature token {tok!r}") from exc
                if idx < 1:
                    raise ValueError(f"line {lineno}: feature index {idx} is not 1-based")
                entries[idx - 1] = val
                max_idx = max(max_idx, idx)
            rows.append(entries)
    dense = np.zeros((len(rows), max_idx))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            dense[i, j] = v
    return np.asarray(labels), dense


def aoptimal_build(
    source,
    seed: int = 0,
    noise_std: float | None = None,
    prior_cov: np.ndarray | None = None,
    standardize: bool = True,
) -> SetFunctionHandle:
    """Variance-reduction objective for selecting linear measurements.

    ``source`` is a libsvm-format path or an (m, d) array of measurement
    rows.  Features are standardized to zero mean and unit deviation
    (disable for pre-scaled data), the prior covariance defaults to a
    seeded random factor times the fixed diagonal (i/d)^2, and the noise
    level defaults to 1/sqrt(d).  The value of a selection is the drop in
    posterior-trace relative to the empty design, so the empty set scores
    exactly 0.
    """
    if isinstance(source, (str, Path)):
        _, data = libsvm_parse(source)
    else:
        data = np.asarray(source, dtype=float)
    if data.ndim != 2 or data.shape[1] < 1:
        raise ValueError("need at least one feature column")
    if standardize:
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        std[std == 0] = 1.0
        data = (data - mean) / std
    design = data.T  # d x n, columns are candidate measurements
    d, n = design.shape
    sigma = (1.0 / np.sqrt(d)) if noise_std is None else float(noise_std)

    if prior_cov is not None:
        prior = np.asarray(prior_cov, dtype=float)
    else:
        rng = np.random.default_rng(seed)
        factor = rng.standard_normal((d, d))
        diag = np.diag(((np.arange(1, d + 1) / d) ** 2))
        prior = factor @ diag @ factor.T
    try:
        np.linalg.cholesky(prior)
    except np.linalg.LinAlgError:
        warnings.warn("prior covariance singular; regularizing with 1e-10 * I")
        prior = prior + 1e-10 * np.eye(d)
    prior_inv = np.linalg.solve(prior, np.eye(d))
    prior_inv = 0.5 * (prior_inv + prior_inv.T)
    base_trace = spd_inverse_trace(prior_inv)  # equals trace(prior) exactly at S=empty
    inv_noise = 1.0 / sigma**2

    def batch(masks: np.ndarray) -> np.ndarray:
        out = np.empty(masks.shape[0])
        for i, row in enumerate(masks):
            idx = np.flatnonzero(row)
            if idx.size == 0:
                out[i] = 0.0
                continue
            xs = design[:, idx]
            m = prior_inv + inv_noise * (xs @ xs.T)
            out[i] = base_trace - spd_inverse_trace(m)
        return out

    return SetFunctionHandle(
        n, batch, monotone=True, name=f"aoptimal(n={n},d={d},seed={seed})"
    )


# ---------------------------------------------------------------------------
# tracking objectives


def _inverse_distances(action_positions: np.ndarray, target_positions: np.ndarray) -> np.ndarray:
    diff = action_positions[:, None, :] - target_positions[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    return 1.0 / np.maximum(dist, DISTANCE_FLOOR)


def facility_location_handle(
    action_positions: np.ndarray, target_positions: np.ndarray
) -> SetFunctionHandle:
    """Sum over targets of the best inverse distance among chosen actions."""
    action_positions = np.asarray(action_positions, dtype=float)
    target_positions = np.asarray(target_positions, dtype=float)
    if not (np.all(np.isfinite(action_positions)) and np.all(np.isfinite(target_positions))):
        raise ValueError("positions must be finite")
    invd = _inverse_distances(action_positions, target_positions)
    n = invd.shape[0]

    def batch(masks: np.ndarray, _chunk: int = 512) -> np.ndarray:
        out = np.empty(masks.shape[0])
        for lo in range(0, masks.shape[0], _chunk):
            part = masks[lo : lo + _chunk]
            picked = np.where(part[:, :, None], invd[None, :, :], 0.0)
            out[lo : lo + part.shape[0]] = picked.max(axis=1).sum(axis=1)
        return out

    return SetFunctionHandle(n, batch, monotone=True, name="facility_location")


def facility_location_eval(subset, targets, action_positions) -> float:
    """Standalone evaluation of the facility-location utility (no counting)."""
    ids = np.asarray(list(subset), dtype=np.int64)
    if ids.size == 0:
        return 0.0
    invd = _inverse_distances(np.asarray(action_positions, float), np.asarray(targets, float))
    return float(invd[ids].max(axis=0).sum())


def ekf_aoptimal_handle(
    action_positions: np.ndarray,
    prev_target_positions: np.ndarray,
    step_std: float = 0.02,
    noise_var: float = 0.01,
) -> SetFunctionHandle:
    """Per-target trace reduction of the filtered-covariance lower bound.

    Each chosen action contributes (P + z z^T) / noise_var to the 2x2
    information sum of every target, where z is the displacement from the
    target's previous position to the action's new position, P is the
    target-increment covariance (step_std**2 * I), and the prior
    information is P^{-1} (the Fisher information of the Gaussian
    increment).  The empty selection scores exactly 0, and adding actions
    never hurts because the contributions are positive semidefinite.
    """
    action_positions = np.asarray(action_positions, dtype=float)
    prev_target_positions = np.asarray(prev_target_positions, dtype=float)
    if not (
        np.all(np.isfinite(action_positions)) and np.all(np.isfinite(prev_target_positions))
    ):
        raise ValueError("positions must be finite")
    p_var = float(step_std) ** 2
    info_prior = 1.0 / p_var
    n, j = action_positions.shape[0], prev_target_positions.shape[0]
    z = action_positions[:, None, :] - prev_target_positions[None, :, :]
    contrib = np.empty((n, j, 3))
    contrib[:, :, 0] = (p_var + z[:, :, 0] ** 2) / noise_var
    contrib[:, :, 1] = (p_var + z[:, :, 1] ** 2) / noise_var
    contrib[:, :, 2] = (z[:, :, 0] * z[:, :, 1]) / noise_var
    flat = contrib.reshape(n, 3 * j)
    base_trace = 2.0 * p_var  # trace of the inverse prior information

    def batch(masks: np.ndarray, _chunk: int = 1024) -> np.ndarray:
        out = np.empty(masks.shape[0])
        for lo in range(0, masks.shape[0], _chunk):
            part = masks[lo : lo + _chunk]
            acc = (part.astype(np.float64) @ flat).reshape(part.shape[0], j, 3)
            m11 = acc[:, :, 0] + info_prior
            m22 = acc[:, :, 1] + info_prior
            m12 = acc[:, :, 2]
            det = m11 * m22 - m12**2
            if np.any(det <= 0):
                raise np.linalg.LinAlgError("information matrix not positive definite")
            tr_inv = (m11 + m22) / det
            out[lo : lo + part.shape[0]] = (base_trace - tr_inv).sum(axis=1)
        return out

    return SetFunctionHandle(n, batch, monotone=True, name="ekf_aoptimal")


def ekf_aoptimal_eval(
    subset,
    action_positions,
    prev_target_positions,
    step_std: float = 0.02,
    noise_var: float = 0.01,
) -> float:
    """Standalone EKF-criterion evaluation (no counting)."""
    handle = ekf_aoptimal_handle(
        np.asarray(action_positions, float),
        np.asarray(prev_target_positions, float),
        step_std=step_std,
        noise_var=noise_var,
    )
    mask = handle.mask_of(subset)
    return float(handle._batch(mask[None, :])[0])
