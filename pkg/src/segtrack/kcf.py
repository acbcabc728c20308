"""Correlation-filter appearance model behind the appearance affinity.

A track's appearance is a ridge regression trained in the Fourier domain
on one grayscale patch (resized to a fixed 64x64 grid, standardised and
Hann-windowed) against a centered Gaussian target, with a Gaussian
correlation kernel. Evaluating the model on another patch yields a dense
response map; its min-max normalised form feeds the affinity
1 - mean(normalised response): a sharp, well-localised peak gives a value
near 1, a flat noise response sits near 0.5, and a perfectly constant
response carries no appearance evidence and scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import BBox

PATCH_SIZE = 64
DEFAULT_SIGMA = 0.5
DEFAULT_LAMBDA = 1e-4
TARGET_BANDWIDTH = 0.1 * PATCH_SIZE
MIN_BOX_AREA = 16

_HANN = np.outer(np.hanning(PATCH_SIZE), np.hanning(PATCH_SIZE))
_grid_y, _grid_x = np.mgrid[0:PATCH_SIZE, 0:PATCH_SIZE]
_TARGET = np.exp(
    -((_grid_y - PATCH_SIZE // 2) ** 2 + (_grid_x - PATCH_SIZE // 2) ** 2)
    / (2.0 * TARGET_BANDWIDTH**2)
)
_TARGET_SPECTRUM = np.fft.fft2(_TARGET)


@dataclass
class KcfModel:
    """Trained appearance model: preprocessed template plus dual spectrum."""

    template: np.ndarray  # preprocessed PATCH_SIZE x PATCH_SIZE patch
    alphaf: np.ndarray  # complex dual coefficients, same shape
    sigma: float
    lam: float
    trained_at: int

    def __post_init__(self):
        if self.template.shape != self.alphaf.shape:
            raise ValueError("template and coefficient spectrum shapes differ")
        if self.sigma <= 0 or self.lam <= 0:
            raise ValueError("sigma and lambda must be positive")


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.astype(np.float64, copy=True)
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    img = img.astype(np.float64)
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bottom = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def _crop(image: np.ndarray, box: BBox) -> np.ndarray:
    """Box region of a grayscale frame; out-of-frame parts take edge values."""
    h, w = image.shape
    ys = np.clip(np.arange(box.y, box.y + box.h), 0, h - 1)
    xs = np.clip(np.arange(box.x, box.x + box.w), 0, w - 1)
    return image[np.ix_(ys, xs)]


def extract_patch(image: np.ndarray, box: BBox) -> np.ndarray:
    """Standardised, Hann-windowed PATCH_SIZE x PATCH_SIZE patch of a box.

    Standardisation (zero mean, unit variance) keeps the Gaussian kernel
    off its saturated regime so the response peak localises exactly.
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected a grayscale frame, got shape {image.shape}")
    patch = _bilinear_resize(_crop(image, box), PATCH_SIZE, PATCH_SIZE)
    patch -= patch.mean()
    std = patch.std()
    if std > 0:
        patch /= std
    return patch * _HANN


def _gaussian_correlation(x: np.ndarray, z: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel between x and every cyclic shift of z."""
    cross = np.real(np.fft.ifft2(np.fft.fft2(z) * np.conj(np.fft.fft2(x))))
    d2 = np.maximum(0.0, (np.sum(x * x) + np.sum(z * z) - 2.0 * cross) / x.size)
    return np.exp(-d2 / (sigma * sigma))


def train(
    image: np.ndarray,
    box: BBox,
    sigma: float = DEFAULT_SIGMA,
    lam: float = DEFAULT_LAMBDA,
    trained_at: int = 0,
) -> KcfModel:
    """Ridge regression in the Fourier domain on the box patch."""
    if box.area < MIN_BOX_AREA or box.w <= 0 or box.h <= 0:
        raise ValueError(f"degenerate training box {box}")
    x = extract_patch(image, box)
    kf = np.fft.fft2(_gaussian_correlation(x, x, sigma))
    alphaf = _TARGET_SPECTRUM / (kf + lam)
    return KcfModel(template=x, alphaf=alphaf, sigma=sigma, lam=lam, trained_at=trained_at)


def raw_response(model: KcfModel, image: np.ndarray, box: BBox) -> np.ndarray:
    """Unscaled correlation response on the internal grid.

    Content shifted by (dy, dx) relative to the training patch peaks at
    (PATCH_SIZE // 2 + dy, PATCH_SIZE // 2 + dx).
    """
    z = extract_patch(image, box)
    k = _gaussian_correlation(model.template, z, model.sigma)
    return np.real(np.fft.ifft2(np.fft.fft2(k) * model.alphaf))


def response_map(model: KcfModel, image: np.ndarray, box: BBox) -> np.ndarray:
    """Min-max normalised response resampled to the box's own grid.

    Values lie in [0, 1] with the peak pinned to 1; a constant raw
    response is defined as all ones (no appearance evidence).
    """
    resp = raw_response(model, image, box)
    lo = resp.min()
    hi = resp.max()
    if hi - lo <= 0.0:
        scaled = np.ones_like(resp)
    else:
        scaled = (resp - lo) / (hi - lo)
    return _bilinear_resize(scaled, box.h, box.w)


def appearance_affinity(model: KcfModel, image: np.ndarray, box: BBox) -> float:
    """1 minus the mean normalised response over the box grid, in [0, 1]."""
    return float(1.0 - response_map(model, image, box).mean())
