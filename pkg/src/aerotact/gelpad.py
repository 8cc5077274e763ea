"""Synthetic gel tactile pad: marker mechanics and image formation.

The pad is a camera looking at a marker-printed elastomer.  Contact
deforms the gel; the printed dots shift; the image carries both the dot
field and, inside the contact disk, an intensity imprint of the touched
surface.  Everything here is a pure function of its inputs so the 30 Hz
frame clock can live in the scenario runner.

Marker mechanics use a separable linear model.  A normal force F_n
spreads markers radially away from the contact center with an
exponential envelope; shear translates the whole field uniformly:

    d(r) = c_n F_n exp(-|r - c| / rho) (r - c) / (|r - c| + eps)
         + c_t (F_x, F_y) + noise(sigma_m)

with eps = 1e-6 mm guarding the center singularity.  The model is
exactly linear in the wrench (before noise), which the tests exploit.

Image formation: uniform 0.5 background, each marker a dark Gaussian
dot, and an optional height-map imprint modulating intensity inside a
contact disk whose radius grows with sqrt(F_n).  Rendering is
deterministic unless an rng is passed for pixel noise; the stochastic
look of real gel images comes from the height maps themselves, which
are generated from seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .frames import Wrench


class TrackingLossError(RuntimeError):
    """Raised when too few markers can be matched between frames."""


@dataclass
class GelPadModel:
    pitch_mm: float = 1.7
    rows: int = 8
    cols: int = 10
    tracked_count: int = 39
    image_width: int = 320
    image_height: int = 240
    px_per_mm: float = 12.0
    c_n: float = 0.05  # mm/N, radial spread per unit normal force
    c_t: float = 0.15  # mm/N, uniform translation per unit shear force
    rho: float = 8.0  # mm, decay length of the radial pattern
    sigma_m: float = 0.02  # mm, per-marker displacement noise
    dot_sigma_px: float = 1.5
    dot_depth: float = 0.35
    texture_gain: float = 0.1
    disk_coeff: float = 3.2  # mm per sqrt(N), contact disk growth
    pixel_noise: float = 0.01

    def __post_init__(self):
        if self.pitch_mm <= 0.0:
            raise ValueError("pitch_mm must be positive")
        if self.tracked_count != 39:
            raise ValueError("tracked_count is fixed at 39")
        if self.rows * self.cols < self.tracked_count:
            raise ValueError("grid too small for the tracked markers")
        for name in ("c_n", "c_t", "rho", "sigma_m"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.image_width <= 0 or self.image_height <= 0 or self.px_per_mm <= 0:
            raise ValueError("image geometry must be positive")

    @property
    def marker_count(self) -> int:
        return self.rows * self.cols

    @property
    def feature_dim(self) -> int:
        return 2 * self.tracked_count

    def marker_reference(self) -> np.ndarray:
        """(rows*cols, 2) marker grid in mm, row-major, centered on the pad."""
        xs = (np.arange(self.cols) - (self.cols - 1) / 2.0) * self.pitch_mm
        ys = (np.arange(self.rows) - (self.rows - 1) / 2.0) * self.pitch_mm
        gx, gy = np.meshgrid(xs, ys)  # row-major: y varies by row
        return np.column_stack([gx.ravel(), gy.ravel()])

    def central_indices(self) -> np.ndarray:
        """Indices of the tracked markers: nearest the pad center.

        Ties on distance (the grid is symmetric, so the cut lands on a
        full shell) break by row-major index, which keeps the selection
        and the feature ordering reproducible.
        """
        ref = self.marker_reference()
        d2 = np.einsum("ij,ij->i", ref, ref)
        order = np.lexsort((np.arange(len(ref)), d2))
        chosen = np.sort(order[: self.tracked_count])
        return chosen

    def mm_to_px(self, positions_mm: np.ndarray) -> np.ndarray:
        """Pad-frame mm to pixel coordinates (x right, y down the rows)."""
        positions_mm = np.atleast_2d(positions_mm)
        out = np.empty_like(positions_mm)
        out[:, 0] = (self.image_width - 1) / 2.0 + positions_mm[:, 0] * self.px_per_mm
        out[:, 1] = (self.image_height - 1) / 2.0 + positions_mm[:, 1] * self.px_per_mm
        return out

    def px_to_mm(self, positions_px: np.ndarray) -> np.ndarray:
        positions_px = np.atleast_2d(positions_px)
        out = np.empty_like(positions_px)
        out[:, 0] = (positions_px[:, 0] - (self.image_width - 1) / 2.0) / self.px_per_mm
        out[:, 1] = (positions_px[:, 1] - (self.image_height - 1) / 2.0) / self.px_per_mm
        return out


@dataclass
class MarkerField:
    """Reference marker grid plus current per-marker displacements, mm."""

    reference: np.ndarray
    displacement: np.ndarray
    t: float = 0.0
    contact_center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    normal_force: float = 0.0
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.reference = np.asarray(self.reference, dtype=float).reshape(-1, 2)
        self.displacement = np.asarray(self.displacement, dtype=float).reshape(-1, 2)
        if len(self.reference) != len(self.displacement):
            raise ValueError("reference and displacement lengths differ")
        self.contact_center = np.asarray(self.contact_center, dtype=float).reshape(2)
        if self.valid is None:
            self.valid = np.ones(len(self.reference), dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool).reshape(len(self.reference))


@dataclass(eq=False)
class TactileImage:
    """Grayscale frame, intensities in [0, 1]."""

    pixels: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError("intensities must lie in [0, 1]")


def marker_displacements(
    contact: Wrench,
    pad: GelPadModel,
    contact_center: np.ndarray,
    rng: Union[np.random.Generator, int, None] = None,
) -> MarkerField:
    """Forward gel model: contact wrench to marker displacement field.

    ``contact`` is the tool-frame wrench, z compression positive.  A
    negative normal component is rejected: the gel cannot be pulled.
    Noise is only drawn when sigma_m > 0, so the zero-noise model is
    exactly linear in the wrench.
    """
    contact.require("E")
    f_n = float(contact.force[2])
    if f_n < 0.0:
        raise ValueError("normal force on the pad must be non-negative")
    center = np.asarray(contact_center, dtype=float).reshape(2)
    ref = pad.marker_reference()
    rel = ref - center
    dist = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    radial = (pad.c_n * f_n * np.exp(-dist / pad.rho) / (dist + 1e-6))[:, None] * rel
    shear = pad.c_t * contact.force[:2]
    disp = radial + shear
    if pad.sigma_m > 0.0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        disp = disp + pad.sigma_m * gen.standard_normal(ref.shape)
    return MarkerField(ref, disp, contact_center=center, normal_force=f_n)


def _stamp_dots(img: np.ndarray, centers_px: np.ndarray, pad: GelPadModel) -> None:
    sigma = pad.dot_sigma_px
    reach = int(np.ceil(4.0 * sigma))
    h, w = img.shape
    for cx, cy in centers_px:
        x0 = max(0, int(np.floor(cx)) - reach)
        x1 = min(w, int(np.floor(cx)) + reach + 1)
        y0 = max(0, int(np.floor(cy)) - reach)
        y1 = min(h, int(np.floor(cy)) + reach + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) - cx
        ys = np.arange(y0, y1) - cy
        blob = np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) / (2.0 * sigma * sigma))
        img[y0:y1, x0:x1] -= pad.dot_depth * blob


def render_tactile_image(
    field: MarkerField,
    texture: Optional[np.ndarray],
    pad: GelPadModel,
    rng: Union[np.random.Generator, None] = None,
) -> TactileImage:
    """Render the dot field over a flat background plus texture imprint.

    The texture height map (image-sized, mm) shows through only inside
    the contact disk, normalized and centered so a constant map (the
    flat printed imitation) leaves the image identical to featureless
    contact.  Pass an rng to add pixel noise inside the disk; without
    one the render is fully deterministic.
    """
    img = np.full((pad.image_height, pad.image_width), 0.5)
    if texture is not None and field.normal_force > 0.0:
        tex = np.asarray(texture, dtype=float)
        if tex.shape != img.shape:
            raise ValueError("texture map must match the image size")
        radius_px = pad.disk_coeff * np.sqrt(field.normal_force) * pad.px_per_mm
        center_px = pad.mm_to_px(field.contact_center)[0]
        ys = np.arange(pad.image_height) - center_px[1]
        xs = np.arange(pad.image_width) - center_px[0]
        disk = (ys[:, None] ** 2 + xs[None, :] ** 2) <= radius_px**2
        span = float(tex.max() - tex.min())
        if span > 0.0 and disk.any():
            norm = (tex - tex.min()) / span
            norm = norm - norm[disk].mean()
            img[disk] += pad.texture_gain * norm[disk]
        if rng is not None and pad.pixel_noise > 0.0:
            img[disk] += pad.pixel_noise * rng.standard_normal(int(disk.sum()))
    _stamp_dots(img, pad.mm_to_px(field.reference + field.displacement), pad)
    return TactileImage(np.clip(img, 0.0, 1.0), t=field.t)
