"""Synthetic camouflage data, dataset directories, and caption providers."""
from __future__ import annotations

import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, FormatError
from .io import read_mask, read_ppm, read_tensor, write_pgm, write_ppm, write_tensor

CONTRAST = 0.15          # cap on mean |fg - bg| colour offset, fraction of [0, 1]
AREA_RANGE = (0.05, 0.40)
TEXTURE_STD = 0.10
TEXTURE_SIGMA = 1.5
DEFAULT_PROMPT = "Describe the image."


@dataclass
class ImageSample:
    id: str
    image: np.ndarray   # (H, W, 3) in [0, 1]
    mask: np.ndarray    # (H, W) bool

    def flipped(self) -> "ImageSample":
        return ImageSample(self.id, self.image[:, ::-1].copy(), self.mask[:, ::-1].copy())


def _texture(rng: np.random.Generator, size: int, base: np.ndarray) -> np.ndarray:
    noise = rng.standard_normal((size, size, 3))
    noise = ndimage.gaussian_filter(noise, sigma=(TEXTURE_SIGMA, TEXTURE_SIGMA, 0), mode="wrap")
    noise = (noise - noise.mean(axis=(0, 1))) / noise.std(axis=(0, 1))
    return base + TEXTURE_STD * noise


def _blob(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = rng.uniform(0.3, 0.7, 2) * size
    mask = np.zeros((size, size), bool)
    for _ in range(rng.integers(1, 4)):
        oy, ox = rng.normal(0, 0.06 * size, 2)
        ry, rx = rng.uniform(0.08, 0.24, 2) * size
        th = rng.uniform(0, np.pi)
        dy, dx = yy - cy - oy, xx - cx - ox
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        mask |= (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    if rng.random() < 0.5:
        # star-shaped polygon around the same centre
        k = int(rng.integers(5, 9))
        angles = np.sort(rng.uniform(0, 2 * np.pi, k))
        radii = rng.uniform(0.08, 0.22, k) * size
        phi = np.arctan2(yy - cy, xx - cx) % (2 * np.pi)
        r = np.hypot(yy - cy, xx - cx)
        ang = np.concatenate([angles - 2 * np.pi, angles, angles + 2 * np.pi])
        rad = np.tile(radii, 3)
        mask |= r <= np.interp(phi, ang, rad)
    return mask


def make_sample(seed: int, size: int, sample_id: str) -> ImageSample:
    rng = np.random.default_rng(seed)
    while True:
        mask = _blob(rng, size)
        if AREA_RANGE[0] <= mask.mean() <= AREA_RANGE[1]:
            break
    base = rng.uniform(0.35, 0.65, 3)
    bg = _texture(rng, size, base)
    fg = _texture(rng, size, base)
    offset = rng.uniform(0.4, 0.7, 3) * CONTRAST * rng.choice([-1.0, 1.0], 3)
    # pin the realised mean colour difference to the drawn offset
    fg += offset - (fg[mask].mean(axis=0) - bg[~mask].mean(axis=0))
    image = np.clip(np.where(mask[..., None], fg, bg), 0.0, 1.0)
    image = np.round(image * 255) / 255
    return ImageSample(sample_id, image, mask)


def sample_id(index: int) -> str:
    return f"s{index:05d}"


def synth_generate(seed: int, count: int, size: int, out, *, captions: bool = True,
                   caption_len: int = 16, caption_dim: int = 48) -> list:
    """Write a dataset directory; per-sample seeds are ``seed + index``."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    out = Path(out)
    for sub in ("images", "masks") + (("captions",) if captions else ()):
        (out / sub).mkdir(parents=True, exist_ok=True)
    provider = CaptionProvider("synthetic", seed=seed, caption_len=caption_len,
                               caption_dim=caption_dim)
    ids = []
    for i in range(count):
        s = make_sample(seed + i, size, sample_id(i))
        write_ppm(out / "images" / f"{s.id}.ppm", s.image)
        write_pgm(out / "masks" / f"{s.id}.pgm", s.mask.astype(np.uint8) * 255)
        if captions:
            write_tensor(out / "captions" / f"{s.id}.cap.mft", provider(s))
        ids.append(s.id)
    (out / "manifest.txt").write_text("".join(f"{i}\n" for i in ids))
    return ids


def read_manifest(root) -> list:
    path = Path(root) / "manifest.txt"
    if not path.exists():
        raise ConfigError(f"dataset manifest not found: {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def load_dataset(root) -> list:
    root = Path(root)
    samples = []
    for i in read_manifest(root):
        img = read_ppm(root / "images" / f"{i}.ppm")
        mask = read_mask(root / "masks" / f"{i}.pgm")
        if mask.shape != img.shape[:2]:
            raise FormatError(f"{i}: mask {mask.shape} does not match image {img.shape[:2]}")
        samples.append(ImageSample(i, img, mask))
    return samples


class CaptionProvider:
    """Stand-in for an offline multimodal captioner.

    ``file`` mode loads ``<root>/captions/<id>.cap.mft``.  ``synthetic`` mode
    derives an embedding from mask statistics: a shared prompt-seeded base plus
    one Gaussian bump per statistic, placed in a seed-chosen token slot at a
    channel position proportional to the statistic's value.
    """

    def __init__(self, mode: str = "synthetic", *, root=None, seed: int = 0,
                 caption_len: int = 16, caption_dim: int = 48, prompt: str = DEFAULT_PROMPT,
                 bump_width: float = 1.5, base_scale: float = 1.0):
        if mode not in ("file", "synthetic"):
            raise ConfigError(f"caption mode must be 'file' or 'synthetic', got {mode!r}")
        if mode == "file" and root is None:
            raise ConfigError("file caption mode needs a dataset root")
        self.mode = mode
        self.root = Path(root) if root is not None else None
        self.seed = seed
        self.shape = (caption_len, caption_dim)
        self.prompt = prompt
        self.bump_width = bump_width
        self.base_scale = base_scale
        self.calls = 0

    def _base(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, zlib.crc32(self.prompt.encode("utf-8"))])
        return self.base_scale * rng.standard_normal(self.shape)

    @staticmethod
    def statistics(sample: ImageSample) -> np.ndarray:
        m = sample.mask
        h, w = m.shape
        ys, xs = np.nonzero(m)
        if ys.size == 0:
            ys, xs = np.array([h / 2]), np.array([w / 2])
        fg = sample.image[m].mean(axis=0) if m.any() else np.full(3, 0.5)
        bg = sample.image[~m].mean(axis=0) if (~m).any() else np.full(3, 0.5)
        return np.concatenate([
            [ys.mean() / h, xs.mean() / w, min(m.mean() * 2.5, 1.0),
             ys.min() / h, xs.min() / w, (ys.max() + 1) / h, (xs.max() + 1) / w],
            fg, bg,
        ])

    def synthetic(self, sample: ImageSample) -> np.ndarray:
        L, d = self.shape
        stats = self.statistics(sample)
        slots = np.random.default_rng([self.seed, 1]).permutation(max(L, stats.size))[:stats.size] % L
        emb = self._base()
        ch = np.arange(d)
        for slot, value in zip(slots, stats):
            emb[slot] += np.exp(-0.5 * ((ch - value * (d - 1)) / self.bump_width) ** 2)
        return emb

    def __call__(self, sample: ImageSample) -> np.ndarray:
        self.calls += 1
        if self.mode == "synthetic":
            return self.synthetic(sample)
        path = self.root / "captions" / f"{sample.id}.cap.mft"
        if not path.exists():
            raise FormatError(f"caption file missing: {path}")
        emb = read_tensor(path)
        if emb.shape != self.shape:
            raise FormatError(f"{path}: caption shape {emb.shape}, expected {self.shape}")
        return emb.astype(np.float64)


def caption_path(root, image_id: str) -> str:
    return os.path.join(root, "captions", f"{image_id}.cap.mft")
