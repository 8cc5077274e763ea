"""Procedural height maps for the recognizable surface textures.

Seven surface categories are modeled.  Index 0 is the no-contact
category and deliberately has no height map; the printed flat imitation
is identically zero relief (it fools geometry while still producing a
contact disk); the remaining five are distinct procedural reliefs.
Every map is deterministic in (category, seed) and sized to the tactile
camera frame, in millimeters of surface relief.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np

from .gelpad import GelPadModel


class TextureClass(IntEnum):
    NON_CONTACT = 0
    PRINTED_FLAT_PAPER = 1
    WOOD_GRAIN = 2
    MARBLE_MOSAIC = 3
    QUARTZ_STONE = 4
    DIAMOND_VINYL = 5
    FOAM_MAT = 6


def _mm_grid(pad: GelPadModel):
    # image-centered millimeter coordinates, matching the pixel grid
    y = (np.arange(pad.image_height) - (pad.image_height - 1) / 2.0) / pad.px_per_mm
    x = (np.arange(pad.image_width) - (pad.image_width - 1) / 2.0) / pad.px_per_mm
    return np.meshgrid(x, y)


def _wood_grain(rng: np.random.Generator, pad: GelPadModel) -> np.ndarray:
    X, Y = _mm_grid(pad)
    theta = rng.uniform(-np.pi / 6.0, np.pi / 6.0)
    u = X * np.cos(theta) + Y * np.sin(theta)
    v = -X * np.sin(theta) + Y * np.cos(theta)
    wavelength = rng.uniform(2.5, 4.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    # slow phase wander across the grain direction imitates growth rings
    jitter = np.zeros_like(u)
    for _ in range(3):
        k = rng.uniform(0.05, 0.15)
        jitter += rng.uniform(0.2, 0.5) * np.sin(2.0 * np.pi * k * v + rng.uniform(0, 2 * np.pi))
    return 0.15 * np.sin(2.0 * np.pi * u / wavelength + phase + jitter)


def _marble_mosaic(rng: np.random.Generator, pad: GelPadModel) -> np.ndarray:
    X, Y = _mm_grid(pad)
    n_sites = 24
    sx = rng.uniform(X.min() - 2.0, X.max() + 2.0, n_sites)
    sy = rng.uniform(Y.min() - 2.0, Y.max() + 2.0, n_sites)
    d2 = (X[..., None] - sx) ** 2 + (Y[..., None] - sy) ** 2
    d2.sort(axis=-1)
    gap = np.sqrt(d2[..., 1]) - np.sqrt(d2[..., 0])
    # grout grooves recess where two cells meet
    return -0.25 * np.exp(-((gap / 0.35) ** 2))


def _quartz_stone(rng: np.random.Generator, pad: GelPadModel) -> np.ndarray:
    noise = rng.standard_normal((pad.image_height, pad.image_width))
    fy = np.fft.fftfreq(pad.image_height)[:, None] * pad.px_per_mm  # cycles per mm
    fx = np.fft.fftfreq(pad.image_width)[None, :] * pad.px_per_mm
    r = np.hypot(fy, fx)
    band = (r > 0.3) & (r < 1.0)
    h = np.fft.ifft2(np.fft.fft2(noise) * band).real
    std = h.std()
    return 0.12 * h / std if std > 0.0 else h


def _diamond_vinyl(rng: np.random.Generator, pad: GelPadModel) -> np.ndarray:
    X, Y = _mm_grid(pad)
    pitch = rng.uniform(2.2, 2.8)
    du = rng.uniform(0.0, pitch)
    dv = rng.uniform(0.0, pitch)
    u = (X + Y) / np.sqrt(2.0) + du
    v = (X - Y) / np.sqrt(2.0) + dv
    tri_u = 1.0 - 2.0 * np.abs(u / pitch - np.round(u / pitch))
    tri_v = 1.0 - 2.0 * np.abs(v / pitch - np.round(v / pitch))
    # eighth powers sharpen the triangular waves into thin crossing ridges
    return 0.2 * (tri_u**8 + tri_v**8)


def _foam_mat(rng: np.random.Generator, pad: GelPadModel) -> np.ndarray:
    X, Y = _mm_grid(pad)
    pitch = rng.uniform(3.0, 3.6)
    dx = X - pitch * np.round(X / pitch)
    dy = Y - pitch * np.round(Y / pitch)
    r2 = dx**2 + dy**2
    radius = 0.42 * pitch
    return 0.3 * np.clip(1.0 - r2 / radius**2, 0.0, None)


_GENERATORS = {
    TextureClass.WOOD_GRAIN: _wood_grain,
    TextureClass.MARBLE_MOSAIC: _marble_mosaic,
    TextureClass.QUARTZ_STONE: _quartz_stone,
    TextureClass.DIAMOND_VINYL: _diamond_vinyl,
    TextureClass.FOAM_MAT: _foam_mat,
}


def synth_texture(cls: TextureClass, seed: int, pad: GelPadModel) -> np.ndarray:
    """Height map (mm) for one surface category, image-sized.

    Deterministic per (cls, seed).  The no-contact category has no
    surface and is rejected; the flat printed imitation returns zeros.
    """
    cls = TextureClass(cls)
    if cls == TextureClass.NON_CONTACT:
        raise ValueError("the no-contact category has no height map")
    if cls == TextureClass.PRINTED_FLAT_PAPER:
        return np.zeros((pad.image_height, pad.image_width))
    rng = np.random.default_rng([int(cls), int(seed)])
    return _GENERATORS[cls](rng, pad)
