"""PSNR / SSIM on [0, 1] images and mean (variance) summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_chw(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected H x W or C x H x W, got shape {x.shape}")
    return x


def psnr(x, y, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    x, y = _as_chw(x), _as_chw(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(data_range ** 2 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every fully contained window of a single-channel pair."""
    win = gaussian_window()
    k = win.shape[0]
    if x.shape[0] < k or x.shape[1] < k:
        raise ValueError(f"image {x.shape} smaller than the {k}x{k} SSIM window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(a):
        return np.einsum("ijkl,kl->ij", sliding_window_view(a, (k, k)), win)

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, y, data_range: float = 1.0) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5); colour images average over channels."""
    x, y = _as_chw(x), _as_chw(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.mean([ssim_map(a, b, data_range).mean() for a, b in zip(x, y)]))


@dataclass(frozen=True)
class ImageScore:
    name: str
    psnr: float
    ssim: float


@dataclass(frozen=True)
class Summary:
    n: int
    psnr_mean: float
    psnr_var: float
    ssim_mean: float
    ssim_var: float
    n_inf: int


def aggregate(reports: Sequence[ImageScore]) -> Summary:
    """Population mean and variance per metric.

    Infinite PSNR values are left out of the PSNR statistics and counted in
    ``n_inf`` instead.
    """
    if len(reports) == 0:
        raise ValueError("nothing to aggregate")
    p = np.array([r.psnr for r in reports], dtype=np.float64)
    s = np.array([r.ssim for r in reports], dtype=np.float64)
    finite = p[np.isfinite(p)]
    if finite.size:
        p_mean, p_var = float(finite.mean()), float(finite.var())
    else:
        p_mean = p_var = math.inf
    return Summary(len(reports), p_mean, p_var, float(s.mean()), float(s.var()),
                   int(p.size - finite.size))


def format_cell(mean: float, var: float, digits: int = 3) -> str:
    if math.isinf(mean):
        return "inf"
    return f"{mean:.{digits}f} ({var:.{digits}f})"


def markdown_table(rows: Iterable[tuple[str, Summary]]) -> str:
    rows = list(rows)
    lines = ["| Method | PSNR | SSIM |", "|---|---|---|"]
    notes = []
    for name, s in rows:
        mark = "*" if s.n_inf else ""
        lines.append(f"| {name} | {format_cell(s.psnr_mean, s.psnr_var)}{mark} "
                     f"| {format_cell(s.ssim_mean, s.ssim_var)} |")
        if s.n_inf:
            notes.append(f"\\* {name}: {s.n_inf} of {s.n} images had infinite PSNR "
                         f"and are excluded from the PSNR mean and variance.")
    return "\n".join(lines + ([""] + notes if notes else [])) + "\n"


def write_scores_csv(scores: Sequence[ImageScore], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "psnr", "ssim"])
        for r in scores:
            w.writerow([r.name, "inf" if math.isinf(r.psnr) else repr(r.psnr), repr(r.ssim)])


def evaluate_pairs(pairs: Iterable[tuple[str, np.ndarray, np.ndarray]]) -> list[ImageScore]:
    """Score (name, prediction, ground truth) triples of [0, 1] images."""
    return [ImageScore(name, psnr(p, g), ssim(p, g)) for name, p, g in pairs]


def write_report(scores: Sequence[ImageScore], prefix, label: str = "prediction") -> Summary:
    """Write ``<prefix>.csv`` and ``<prefix>.md``; return the summary."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    summary = aggregate(scores)
    write_scores_csv(scores, prefix.with_suffix(".csv"))
    prefix.with_suffix(".md").write_text(markdown_table([(label, summary)]))
    return summary
