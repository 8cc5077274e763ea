"""Marker tracking: dot detection, matching, and feature extraction.

Detection finds dark dots as local darkness maxima and refines each to
subpixel precision with an iterated thresholded centroid.  The
threshold sits above the texture imprint amplitude, so only the dot
core contributes to the centroid and texture content inside the
contact disk does not bias the estimate.

Matching pairs each marker's detected dot against its reference
position, gated at half the grid pitch.  The gate anchors at the
reference position plus the marker's previous displacement when a
prior field is supplied; sequential callers can therefore follow
excursions well beyond half a pitch, while one-shot calls keep the
plain nearest-reference behavior.
"""
from __future__ import annotations

import weakref
from typing import Optional

import numpy as np

from .gelpad import GelPadModel, MarkerField, TactileImage, TrackingLossError

_REFERENCE_CACHE: "weakref.WeakKeyDictionary[TactileImage, np.ndarray]" = weakref.WeakKeyDictionary()


def detect_dots(image: TactileImage, pad: GelPadModel) -> np.ndarray:
    """Subpixel dot centers, (n, 2) pixel coordinates.

    Sparse pipeline: threshold on darkness first, test the surviving
    pixels (a thousand or so dot-core pixels, not the whole frame) for
    being 9x9-window maxima, then refine every peak at once with three
    rounds of re-centered thresholded centroids.
    """
    darkness = 0.5 - image.pixels
    threshold = 0.4 * pad.dot_depth
    core_cut = 0.43 * pad.dot_depth
    margin = 16
    padded = np.zeros((darkness.shape[0] + 2 * margin, darkness.shape[1] + 2 * margin))
    padded[margin:-margin, margin:-margin] = darkness

    ys, xs = np.nonzero(darkness > threshold)
    if len(ys) == 0:
        return np.empty((0, 2))
    vals = darkness[ys, xs]
    pys, pxs = ys + margin, xs + margin
    dy, dx = np.mgrid[-4:5, -4:5]
    neigh = padded[pys[:, None] + dy.ravel()[None, :], pxs[:, None] + dx.ravel()[None, :]]
    peak = vals >= neigh.max(axis=1)
    py = pys[peak].astype(float)
    px = pxs[peak].astype(float)
    if len(py) == 0:
        return np.empty((0, 2))

    reach = 5
    offs = np.arange(-reach, reach + 1, dtype=float)
    ioffs = np.arange(-reach, reach + 1)
    alive = np.ones(len(py), dtype=bool)
    for _ in range(3):
        iy = np.rint(py).astype(int)
        ix = np.rint(px).astype(int)
        wins = padded[iy[:, None, None] + ioffs[None, :, None], ix[:, None, None] + ioffs[None, None, :]]
        wins = np.clip(wins - core_cut, 0.0, None)
        mass = wins.sum(axis=(1, 2))
        alive &= mass > 0.0
        safe = np.where(mass > 0.0, mass, 1.0)
        py = np.where(alive, (wins.sum(axis=2) @ offs) / safe + iy, py)
        px = np.where(alive, (wins.sum(axis=1) @ offs) / safe + ix, px)
    out = np.column_stack([px - margin, py - margin])[alive]

    # merge duplicate peaks from plateau ties (greedy in detection order)
    diff = out[:, None, :] - out[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    suppressed = np.zeros(len(out), dtype=bool)
    keep: list = []
    for i in range(len(out)):
        if not suppressed[i]:
            keep.append(i)
            suppressed |= d2[i] < 9.0
    return out[keep]


def _reference_positions_mm(reference: TactileImage, pad: GelPadModel) -> np.ndarray:
    """Per-marker detected reference dot positions in mm (cached per image).

    Markers whose dot is not found in the reference image get NaN and
    stay invalid for the whole run; the reference frame is supposed to
    be a clean non-contact capture, so this is exceptional.
    """
    cached = _REFERENCE_CACHE.get(reference)
    if cached is not None:
        return cached
    grid = pad.marker_reference()
    dots = pad.px_to_mm(detect_dots(reference, pad))
    out = np.full_like(grid, np.nan)
    if len(dots):
        d = np.linalg.norm(grid[:, None, :] - dots[None, :, :], axis=2)
        nearest = np.argmin(d, axis=1)
        ok = d[np.arange(len(grid)), nearest] <= 0.25 * pad.pitch_mm
        out[ok] = dots[nearest[ok]]
    _REFERENCE_CACHE[reference] = out
    return out


def track_markers(
    reference: TactileImage,
    current: TactileImage,
    pad: GelPadModel,
    prior: Optional[MarkerField] = None,
) -> MarkerField:
    """Match dots between a non-contact reference frame and the current frame.

    Returns per-marker displacements in mm.  Unmatched markers carry
    valid = False and reuse the prior displacement (zero without a
    prior).  Raises TrackingLossError when more than a quarter of the
    tracked (central) markers are unmatched.
    """
    ref_mm = _reference_positions_mm(reference, pad)
    cur_mm = pad.px_to_mm(detect_dots(current, pad))
    n = pad.marker_count
    disp = np.zeros((n, 2))
    valid = np.zeros(n, dtype=bool)
    if prior is not None:
        if len(prior.reference) != n:
            raise ValueError("prior field does not cover the marker grid")
        disp[:] = prior.displacement

    predicted = ref_mm + disp
    gate = 0.5 * pad.pitch_mm
    if len(cur_mm):
        d = np.linalg.norm(predicted[:, None, :] - cur_mm[None, :, :], axis=2)
        d[~np.isfinite(d)] = np.inf
        nearest = np.argmin(d, axis=1)
        for i in range(n):
            j = nearest[i]
            if d[i, j] <= gate:
                disp[i] = cur_mm[j] - ref_mm[i]
                valid[i] = True

    central = pad.central_indices()
    lost = int(np.count_nonzero(~valid[central]))
    if lost > 0.25 * pad.tracked_count:
        raise TrackingLossError(
            f"{lost} of {pad.tracked_count} tracked markers unmatched at t={current.t:.4f}"
        )
    return MarkerField(pad.marker_reference(), disp, t=current.t, valid=valid)


def feature_vector(field: MarkerField, pad: GelPadModel) -> np.ndarray:
    """78-vector of central-marker displacements, row-major, (dx, dy) interleaved."""
    if len(field.reference) != pad.marker_count:
        raise ValueError(
            f"field has {len(field.reference)} markers, expected {pad.marker_count}"
        )
    vec = field.displacement[pad.central_indices()].ravel().copy()
    if not np.all(np.isfinite(vec)):
        raise ValueError("feature vector contains non-finite entries")
    return vec
