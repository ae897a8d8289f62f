"""Segmentation quality measures for grayscale predictions against binary ground truth.

Constants follow the reference implementations used across the COD/SOD
literature: weighted F with beta^2 = 1, a 7x7 Gaussian of sigma 5 and a
ln(0.5)/5 distance decay; S-measure with alpha = 0.5; E-measure averaged over
256 binarization thresholds.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionError

EPS = np.spacing(1.0)
N_THRESHOLDS = 256


def _check(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g)
    if p.shape != g.shape:
        raise DimensionError(f"prediction {p.shape} and ground truth {g.shape} differ")
    return p, g.astype(bool)


def normalize_prediction(p: np.ndarray) -> np.ndarray:
    """Per-image min-max stretch to [0, 1]; constant maps are left as is."""
    p = np.asarray(p, dtype=np.float64)
    lo, hi = p.min(), p.max()
    if hi > lo:
        return (p - lo) / (hi - lo)
    return np.clip(p, 0.0, 1.0)


def mae(p, g) -> float:
    p, g = _check(p, g)
    return float(np.mean(np.abs(p - g)))


def iou(p, g, threshold: float = 0.5) -> float:
    p, g = _check(p, g)
    b = p >= threshold
    union = np.count_nonzero(b | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(b & g) / union


def gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = (size - 1) / 2
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    k[k < np.finfo(k.dtype).eps * k.max()] = 0
    return k / k.sum()


def weighted_f_beta(p, g, beta2: float = 1.0) -> float:
    p, g = _check(p, g)
    if not g.any():
        warnings.warn("weighted F-measure: empty ground truth, returning 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    dist, (iy, ix) = ndimage.distance_transform_edt(~g, return_indices=True)
    err = np.abs(p - g)
    # background errors are read at the nearest foreground pixel
    err_t = err.copy()
    err_t[~g] = err[iy[~g], ix[~g]]
    err_a = ndimage.convolve(err_t, gaussian_kernel(), mode="constant", cval=0.0)
    min_e = np.where(g & (err_a < err), err_a, err)
    importance = np.where(g, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    err_w = min_e * importance
    tp_w = np.count_nonzero(g) - err_w[g].sum()
    fp_w = err_w[~g].sum()
    recall = 1.0 - err_w[g].mean()
    precision = tp_w / (tp_w + fp_w + EPS)
    return float((1 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


def _s_object(x: np.ndarray) -> float:
    mu = x.mean()
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    return 2 * mu / (mu * mu + 1 + sd + EPS)


def _ssim(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    x, y = p.mean(), g.mean()
    sx = ((p - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((g - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((p - x) * (g - y)).sum() / (n - 1 + EPS)
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return a / (b + EPS)
    return 1.0 if b == 0 else 0.0


def s_measure(p, g, alpha: float = 0.5) -> float:
    p, g = _check(p, g)
    y = g.mean()
    if y == 0:
        return float(1 - p.mean())
    if y == 1:
        return float(p.mean())
    gf = g.astype(np.float64)
    obj = y * _s_object(p[g]) + (1 - y) * _s_object(1 - p[~g])
    h, w = g.shape
    cy, cx = np.argwhere(g).mean(axis=0).round().astype(int) + 1
    area = h * w
    w_lt = cx * cy / area
    w_rt = cy * (w - cx) / area
    w_lb = (h - cy) * cx / area
    w_rb = 1 - w_lt - w_rt - w_lb
    region = (w_lt * _ssim(p[:cy, :cx], gf[:cy, :cx]) + w_rt * _ssim(p[:cy, cx:], gf[:cy, cx:])
              + w_lb * _ssim(p[cy:, :cx], gf[cy:, :cx]) + w_rb * _ssim(p[cy:, cx:], gf[cy:, cx:]))
    return float(max(0.0, alpha * obj + (1 - alpha) * region))


def e_measure_curve(p, g) -> np.ndarray:
    """Enhanced alignment score at each threshold t/256 (p > t/256), t = 0..255."""
    p, g = _check(p, g)
    n = g.size
    n_fg = np.count_nonzero(g)
    levels = np.clip(np.ceil(p * N_THRESHOLDS).astype(np.int64) - 1, -1, N_THRESHOLDS - 1)
    # p > t/256  <=>  ceil(256 p) - 1 >= t
    hist_fg = np.bincount(levels[g] + 1, minlength=N_THRESHOLDS + 1)[1:]
    hist_bg = np.bincount(levels[~g] + 1, minlength=N_THRESHOLDS + 1)[1:]
    tp = np.cumsum(hist_fg[::-1])[::-1].astype(np.float64)
    fp = np.cumsum(hist_bg[::-1])[::-1].astype(np.float64)
    pred_fg = tp + fp
    if n_fg == 0:
        return (n - pred_fg) / n
    if n_fg == n:
        return pred_fg / n
    fn = n_fg - tp
    tn = (n - pred_fg) - fn
    mu_p = pred_fg / n
    mu_g = n_fg / n
    total = np.zeros(N_THRESHOLDS)
    for count, dp, dg in ((tp, 1 - mu_p, 1 - mu_g), (fp, 1 - mu_p, -mu_g),
                          (fn, -mu_p, 1 - mu_g), (tn, -mu_p, -mu_g)):
        align = 2 * dp * dg / (dp * dp + dg * dg + EPS)
        total += count * (align + 1) ** 2 / 4
    return total / n


def e_measure(p, g) -> float:
    return float(e_measure_curve(p, g).mean())


@dataclass
class EvalReport:
    ids: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # dicts with fwb, mae, s, e, iou

    KEYS = ("fwb", "mae", "s", "e", "iou")

    def add(self, image_id: str, pred: np.ndarray, gt: np.ndarray, normalize: bool = True):
        p = normalize_prediction(pred) if normalize else np.asarray(pred, dtype=np.float64)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            row = {"fwb": weighted_f_beta(p, gt), "mae": mae(p, gt), "s": s_measure(p, gt),
                   "e": e_measure(p, gt), "iou": iou(p, gt)}
        self.ids.append(image_id)
        self.rows.append(row)
        return row

    def mean(self) -> dict:
        if not self.rows:
            return {k: float("nan") for k in self.KEYS}
        return {k: float(np.mean([r[k] for r in self.rows])) for k in self.KEYS}

    def records(self) -> str:
        lines = ["image," + ",".join(self.KEYS)]
        for image_id, row in zip(self.ids, self.rows):
            lines.append(image_id + "," + ",".join(f"{row[k]:.6f}" for k in self.KEYS))
        m = self.mean()
        lines.append("MEAN," + ",".join(f"{m[k]:.6f}" for k in self.KEYS))
        return "\n".join(lines) + "\n"

    def table(self, title: str | None = None) -> str:
        head = f"{'image':<16}{'F_β^w':>8}{'MAE':>8}{'S_α':>8}{'E_φ':>8}{'IoU':>8}"
        lines = [title] if title else []
        lines += [head, "-" * len(head)]
        for image_id, row in zip(self.ids, self.rows):
            lines.append(f"{image_id:<16}" + "".join(f"{row[k]:>8.3f}" for k in self.KEYS))
        m = self.mean()
        lines.append("-" * len(head))
        lines.append(f"{'MEAN':<16}" + "".join(f"{m[k]:>8.3f}" for k in self.KEYS))
        return "\n".join(lines)


def side_by_side(reports: dict) -> str:
    """One MEAN row per named report, e.g. {'caption': r1, 'codebook': r2}."""
    head = f"{'mode':<12}{'F_β^w':>8}{'MAE':>8}{'S_α':>8}{'E_φ':>8}{'IoU':>8}"
    lines = [head, "-" * len(head)]
    for name, rep in reports.items():
        m = rep.mean()
        lines.append(f"{name:<12}" + "".join(f"{m[k]:>8.3f}" for k in EvalReport.KEYS))
    return "\n".join(lines)
