"""Per-pixel color+texture feature extraction.

Each pixel gets a 6-dimensional feature vector: Gaussian-smoothed L*a*b*
color (3) plus contrast, anisotropy and polarity of the local gradient
second-moment matrix (3). Columns are z-scored over the image so that
feature-space distances are commensurate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import (
    CorruptImage,
    ImageTooSmall,
    IoError,
    UnsupportedFormat,
    ZeroVarianceFeature,
)

FEATURE_NAMES = ("L", "a", "b", "contrast", "anisotropy", "polarity")


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB image, row-major. pixels[y, x] = (r, g, b) in [0, 255]."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise CorruptImage("image must be at least 1x1")
        if self.pixels.shape != (self.height, self.width, 3):
            raise CorruptImage(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )

    @property
    def n(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class FeatureConfig:
    smoothing_sigma: float = 2.0
    texture_scale: float = 2.0


@dataclass(frozen=True)
class FeatureMap:
    """N x dim feature matrix; row i corresponds to pixel i = y*width + x."""

    n: int
    dim: int
    data: np.ndarray  # (n, dim) float64

    def __post_init__(self):
        if self.data.shape != (self.n, self.dim):
            raise ValueError("feature matrix shape mismatch")


def load_image(path) -> RasterImage:
    """Decode a PNG (8-bit RGB/RGBA, alpha dropped) or binary PPM (P6)."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(8)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if head.startswith(b"\x89PNG\r\n\x1a\n"):
        return _load_png(path)
    if head.startswith(b"P6"):
        return _load_ppm(path)
    if head.startswith(b"P3"):
        raise UnsupportedFormat("ASCII PPM (P3) not accepted; use binary P6")
    raise UnsupportedFormat(f"{path}: not a PNG or binary PPM (P6) file")


def _load_png(path) -> RasterImage:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA", "L", "P", "LA"):
                raise UnsupportedFormat(f"PNG mode {im.mode} not supported")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise CorruptImage(f"{path}: {exc}") from exc
    h, w = arr.shape[:2]
    return RasterImage(width=w, height=h, pixels=arr)


def _load_ppm(path) -> RasterImage:
    with open(path, "rb") as fh:
        data = fh.read()

    # Header: "P6" <ws> width <ws> height <ws> maxval <single ws> raster.
    # '#' comments may appear between tokens.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptImage(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval

    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise CorruptImage(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise UnsupportedFormat(f"PPM maxval {maxval} not supported (need 255)")
    if width < 1 or height < 1:
        raise CorruptImage(f"{path}: bad PPM dimensions {width}x{height}")

    raster = data[pos : pos + 3 * width * height]
    if len(raster) < 3 * width * height:
        raise CorruptImage(f"{path}: PPM raster truncated")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(width=width, height=height, pixels=arr.copy())


# sRGB (D65) -> XYZ linear transform and D65 reference white.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Convert (..., 3) uint8 sRGB to CIE L*a*b* (D65 white point)."""
    c = pixels.astype(np.float64) / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T / _WHITE_D65

    delta = 6.0 / 29.0
    f = np.where(
        xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0
    )
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _second_moment_features(gray: np.ndarray, scale: float):
    """Contrast, anisotropy, polarity from the Gaussian-windowed
    second-moment matrix of the gradient of `gray` at the given scale."""
    gy, gx = np.gradient(gray)
    smooth = lambda a: gaussian_filter(a, sigma=scale, truncate=3.0, mode="nearest")
    sxx = smooth(gx * gx)
    syy = smooth(gy * gy)
    sxy = smooth(gx * gy)

    half_tr = 0.5 * (sxx + syy)
    disc = np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy**2, 0.0))
    lam1 = half_tr + disc
    lam2 = np.maximum(half_tr - disc, 0.0)

    tiny = 1e-12
    contrast = lam1 + lam2
    anisotropy = np.where(lam1 > tiny, 1.0 - lam2 / np.maximum(lam1, tiny), 0.0)

    # Dominant eigenvector of [[sxx, sxy], [sxy, syy]] for lam1; pick the
    # better-conditioned closed form, falling back to the x axis when the
    # tensor is (near-)isotropic and the direction is arbitrary.
    vx = np.where(np.abs(sxy) > tiny, sxy, np.where(sxx >= syy, 1.0, 0.0))
    vy = np.where(np.abs(sxy) > tiny, lam1 - sxx, np.where(sxx >= syy, 0.0, 1.0))
    norm = np.sqrt(vx * vx + vy * vy)
    norm = np.where(norm > tiny, norm, 1.0)
    vx, vy = vx / norm, vy / norm

    proj = gx * vx + gy * vy
    num = np.abs(smooth(proj))
    den = smooth(np.abs(proj))
    polarity = np.where(den > tiny, num / np.maximum(den, tiny), 0.0)
    return contrast, anisotropy, polarity


def _standardize_columns(data: np.ndarray) -> np.ndarray:
    """Z-score each column; constant columns become zero with a warning."""
    out = np.empty_like(data)
    for j in range(data.shape[1]):
        col = data[:, j]
        mean = col.mean()
        std = col.std()
        if std < 1e-12:
            warnings.warn(
                f"feature column '{FEATURE_NAMES[j]}' is constant; zeroed",
                ZeroVarianceFeature,
            )
            out[:, j] = 0.0
        else:
            out[:, j] = (col - mean) / std
    return out


def extract_features(img: RasterImage, cfg: FeatureConfig) -> FeatureMap:
    """Compute the standardized 6-dim color+texture features for every pixel.

    Columns 0-2 are the L*a*b* channels smoothed with a Gaussian of
    sigma=cfg.smoothing_sigma; columns 3-5 are contrast, anisotropy and
    polarity at scale cfg.texture_scale. Deterministic for fixed inputs.
    """
    if cfg.smoothing_sigma <= 0:
        raise ValueError("smoothing_sigma must be > 0")
    if cfg.texture_scale <= 0:
        raise ValueError("texture_scale must be > 0")
    min_dim = 2 * math.ceil(3 * cfg.texture_scale) + 1
    if min(img.width, img.height) < min_dim:
        raise ImageTooSmall(
            f"image {img.width}x{img.height} smaller than the {min_dim}px "
            f"support of texture_scale={cfg.texture_scale}"
        )

    lab = rgb_to_lab(img.pixels)
    color = np.stack(
        [
            gaussian_filter(
                lab[..., c], sigma=cfg.smoothing_sigma, truncate=3.0, mode="nearest"
            )
            for c in range(3)
        ],
        axis=-1,
    )
    contrast, anisotropy, polarity = _second_moment_features(
        lab[..., 0], cfg.texture_scale
    )

    raw = np.concatenate(
        [
            color.reshape(-1, 3),
            contrast.reshape(-1, 1),
            anisotropy.reshape(-1, 1),
            polarity.reshape(-1, 1),
        ],
        axis=1,
    )
    data = _standardize_columns(raw)
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite feature values")
    return FeatureMap(n=img.n, dim=raw.shape[1], data=data)


def raw_features(img: RasterImage, cfg: FeatureConfig) -> np.ndarray:
    """Features before standardization (test hook for equivariance checks)."""
    lab = rgb_to_lab(img.pixels)
    color = np.stack(
        [
            gaussian_filter(
                lab[..., c], sigma=cfg.smoothing_sigma, truncate=3.0, mode="nearest"
            )
            for c in range(3)
        ],
        axis=-1,
    )
    contrast, anisotropy, polarity = _second_moment_features(
        lab[..., 0], cfg.texture_scale
    )
    return np.concatenate(
        [
            color.reshape(-1, 3),
            contrast.reshape(-1, 1),
            anisotropy.reshape(-1, 1),
            polarity.reshape(-1, 1),
        ],
        axis=1,
    )
