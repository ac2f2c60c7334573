"""ROI-masked full-reference image quality metrics: PSNR, SSIM, CC, HaarPSI.

All metrics take the ground truth as the reference.  The dynamic range for
PSNR and SSIM is the ground-truth intensity range inside the ROI, and pixels
outside the ROI are zeroed before any windowed computation.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.signal import convolve2d

from .errors import ConfigError, NumericalError

# +inf PSNR is stored as the largest finite double so CSV stays numeric;
# MetricsReport.psnr_is_inf records that the substitution happened.
PSNR_SENTINEL = float(np.finfo(np.float64).max)


@dataclass
class MetricsReport:
    """One row of quality metrics.  ``lpips`` is an optional slot, never
    populated here (needs pretrained perceptual weights, out of scope)."""

    psnr_db: float
    ssim: float
    cc: float
    haarpsi: float
    psnr_is_inf: bool = False
    lpips: float | None = None


def _full_roi(shape) -> np.ndarray:
    return np.ones(shape, dtype=bool)


def _check_pair(rec: np.ndarray, gt: np.ndarray, roi: np.ndarray | None):
    rec = np.asarray(rec, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if rec.shape != gt.shape:
        raise ConfigError(f"shape mismatch {rec.shape} vs {gt.shape}")
    if roi is None:
        roi = _full_roi(gt.shape)
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != gt.shape:
        raise ConfigError("roi shape does not match images")
    if not roi.any():
        raise ConfigError("empty roi")
    return rec, gt, roi


def roi_from_gt(gt: np.ndarray, threshold_frac: float = 0.0) -> np.ndarray:
    """Mask of pixels with gt > threshold_frac * max(gt)."""
    if not 0.0 <= threshold_frac < 1.0:
        raise ConfigError("threshold_frac must lie in [0, 1)")
    gt = np.asarray(gt, dtype=float)
    mask = gt > threshold_frac * float(gt.max())
    if not mask.any():
        raise ConfigError("roi mask is empty (ground truth has no pixel above threshold)")
    return mask


def _gt_range(gt: np.ndarray, roi: np.ndarray) -> float:
    vals = gt[roi]
    r = float(vals.max() - vals.min())
    if r == 0.0:
        raise NumericalError("ground truth is constant on the roi; dynamic range undefined")
    return r


def psnr(rec: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None) -> float:
    """10*log10(R^2/MSE) with R the gt range and MSE both taken over the roi.

    Returns float('inf') for an exact match; see PSNR_SENTINEL for CSV use.
    """
    rec, gt, roi = _check_pair(rec, gt, roi)
    r = _gt_range(gt, roi)
    mse = float(np.mean((rec[roi] - gt[roi]) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(r * r / mse)


def ssim(rec: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None,
         win_size: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM with a uniform window and no Gaussian weighting.

    Images are zeroed outside the roi and cropped to the roi bounding box;
    the local statistics use the unbiased covariance normalization of the
    common reference implementation, and the mean runs over window centers
    that lie inside the roi with the full window inside the crop.
    """
    rec, gt, roi = _check_pair(rec, gt, roi)
    if win_size % 2 != 1 or win_size < 3:
        raise ConfigError("win_size must be odd and >= 3")
    r = _gt_range(gt, roi)
    c1 = (k1 * r) ** 2
    c2 = (k2 * r) ** 2

    ii, jj = np.nonzero(roi)
    sl = (slice(ii.min(), ii.max() + 1), slice(jj.min(), jj.max() + 1))
    a = np.where(roi, rec, 0.0)[sl]
    b = np.where(roi, gt, 0.0)[sl]
    roi_c = roi[sl]
    if min(a.shape) < win_size:
        raise ConfigError("roi bounding box smaller than the ssim window")

    n = win_size * win_size
    cov_norm = n / (n - 1)
    ua = uniform_filter(a, win_size)
    ub = uniform_filter(b, win_size)
    uaa = uniform_filter(a * a, win_size)
    ubb = uniform_filter(b * b, win_size)
    uab = uniform_filter(a * b, win_size)
    va = cov_norm * (uaa - ua * ua)
    vb = cov_norm * (ubb - ub * ub)
    vab = cov_norm * (uab - ua * ub)
    s = ((2 * ua * ub + c1) * (2 * vab + c2)) / ((ua**2 + ub**2 + c1) * (va + vb + c2))

    h = win_size // 2
    valid = np.zeros_like(roi_c)
    valid[h:-h, h:-h] = True
    valid &= roi_c
    if not valid.any():
        raise ConfigError("no valid ssim window centers inside the roi")
    return float(s[valid].mean())


def pearson_cc(rec: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None) -> float:
    """Pearson correlation over flattened pixels inside roi with nonzero gt."""
    rec, gt, roi = _check_pair(rec, gt, roi)
    sel = roi & (gt != 0)
    x = rec[sel]
    y = gt[sel]
    if x.size < 2:
        raise ConfigError("need at least two nonzero-gt pixels inside the roi")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = float(np.linalg.norm(xc))
    ny = float(np.linalg.norm(yc))
    if nx == 0.0 or ny == 0.0:
        raise NumericalError("correlation undefined for a constant sample")
    return float(np.dot(xc, yc) / (nx * ny))


def _haar_high_pass(scale: int) -> np.ndarray:
    # 2^j x 2^j Haar filter, high-pass along axis 0; zero sum, so interior
    # responses ignore constant offsets (borders see the zero padding)
    size = 2**scale
    f = np.full((size, size), 2.0 ** (-scale))
    f[: size // 2, :] *= -1.0
    return f


def _logistic(x: np.ndarray, alpha: float) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-alpha * x))


def haarpsi(rec: np.ndarray, gt: np.ndarray, data_range: float | None = None,
            c: float = 30.0, alpha: float = 4.2) -> float:
    """Haar wavelet-based perceptual similarity index in [0, 1].

    Both images are scaled so that ``data_range`` maps to 255 (the range the
    constant C was calibrated for), mean-subsampled by two, and compared
    through local similarities of first- and second-scale Haar magnitudes,
    weighted by third-scale magnitudes.
    """
    rec = np.asarray(rec, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if rec.shape != gt.shape:
        raise ConfigError(f"shape mismatch {rec.shape} vs {gt.shape}")
    if min(gt.shape) < 32:
        raise ConfigError("haarpsi needs images of at least 32x32")
    if data_range is None:
        data_range = float(gt.max() - gt.min())
    if data_range <= 0:
        raise NumericalError("non-positive data range")
    scale = 255.0 / data_range
    a = rec * scale
    b = gt * scale

    def subsample(x):
        h, w = x.shape
        h -= h % 2
        w -= w % 2
        return x[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))

    a = subsample(a)
    b = subsample(b)

    num = 0.0
    den = 0.0
    for orient in range(2):
        mags_a = []
        mags_b = []
        for j in (1, 2, 3):
            f = _haar_high_pass(j)
            if orient == 1:
                f = f.T
            mags_a.append(np.abs(convolve2d(a, f, mode="same", boundary="fill")))
            mags_b.append(np.abs(convolve2d(b, f, mode="same", boundary="fill")))
        sim = 0.0
        for j in (0, 1):
            sim = sim + (2 * mags_a[j] * mags_b[j] + c) / (mags_a[j] ** 2 + mags_b[j] ** 2 + c)
        hs = _logistic(sim / 2.0, alpha)
        w = np.maximum(mags_a[2], mags_b[2])
        num += float(np.sum(hs * w))
        den += float(np.sum(w))
    if den == 0.0:
        raise NumericalError("haarpsi weights are identically zero (constant images)")
    val = num / den
    return float((np.log(val / (1.0 - val)) / alpha) ** 2)


def compute_report(rec: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None) -> MetricsReport:
    """All metrics in one report; haarpsi sees roi-zeroed full-size images."""
    rec, gt, roi = _check_pair(rec, gt, roi)
    p = psnr(rec, gt, roi)
    is_inf = math.isinf(p)
    rec_z = np.where(roi, rec, 0.0)
    gt_z = np.where(roi, gt, 0.0)
    return MetricsReport(
        psnr_db=PSNR_SENTINEL if is_inf else p,
        ssim=ssim(rec, gt, roi),
        cc=pearson_cc(rec, gt, roi),
        haarpsi=haarpsi(rec_z, gt_z, data_range=_gt_range(gt, roi)),
        psnr_is_inf=is_inf,
    )
