"""Surface-texture recognition from tactile images.

A 270-dimensional descriptor summarizes the contact region: a 16x16
intensity patch normalized to zero mean and unit variance (256 values,
illumination invariant), an 8-bin gradient-orientation histogram, and a
6-band radial spectral-energy profile, the last two normalized to unit
sum.  A k-nearest-neighbor vote over labeled exemplars yields per-class
likelihoods with additive smoothing, and a per-step normalized
accumulator turns the noisy per-frame likelihoods into a stable
prediction.  The no-contact category participates as an ordinary class,
so the classifier doubles as a contact detector.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .gelpad import GelPadModel, TactileImage, marker_displacements, render_tactile_image
from .frames import Wrench
from .textures import TextureClass, synth_texture

N_CLASSES = 7
DESCRIPTOR_DIM = 270
_PATCH = 16
_N_ORIENT = 8
_N_BANDS = 6
_BETA = 0.1  # additive smoothing of the neighbor vote
_MEMORY = 5.0  # weight of the previous accumulated score per step


_WINDOW = 128  # px, fixed analysis window for contact frames
_DOT_CUT_FRAC = 0.7  # of the window median: darker pixels are dot cores
_DOT_PAD = 4  # px of dilation that removes the dots' Gaussian skirts
_FLAT_STD = 0.005  # below this the patch is treated as featureless


def _block_reduce(region: np.ndarray, out_h: int, out_w: int, median: bool) -> np.ndarray:
    """Deterministic 16x16 resample over integer-boundary blocks.

    Median mode ignores NaN-masked pixels (marker dots, outside the
    contact region) so the texture relief survives; empty blocks fall
    back to the background level.
    """
    h, w = region.shape
    if h % out_h == 0 and w % out_w == 0:
        bh, bw = h // out_h, w // out_w
        blocks = region.reshape(out_h, bh, out_w, bw)
        blocks = blocks.transpose(0, 2, 1, 3).reshape(out_h, out_w, bh * bw)
        if not median:
            return blocks.mean(axis=2)
        # sort-and-gather nanmedian: NaNs sort last, so the median of the
        # v valid values is (s[(v-1)//2] + s[v//2]) / 2 for either parity,
        # bit-identical to np.nanmedian and far cheaper than the masked path
        s = np.sort(blocks, axis=2)
        valid = blocks.shape[2] - np.count_nonzero(np.isnan(blocks), axis=2)
        lo = np.maximum(valid - 1, 0) // 2
        hi = np.minimum(valid // 2, blocks.shape[2] - 1)
        out = (
            np.take_along_axis(s, lo[:, :, None], axis=2)[:, :, 0]
            + np.take_along_axis(s, hi[:, :, None], axis=2)[:, :, 0]
        ) / 2.0
        out[valid == 0] = np.nan
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN window
            fallback = np.nanmedian(region)
        if not np.isfinite(fallback):
            fallback = 0.5
        out[~np.isfinite(out)] = fallback
        return out
    out = np.empty((out_h, out_w))
    rb = (np.arange(out_h + 1) * h) // out_h
    cb = (np.arange(out_w + 1) * w) // out_w
    fallback = np.nanmedian(region) if median and np.any(np.isfinite(region)) else 0.5
    for i in range(out_h):
        rows = region[rb[i] : rb[i + 1]]
        for j in range(out_w):
            block = rows[:, cb[j] : cb[j + 1]]
            if median:
                v = np.nanmedian(block) if np.any(np.isfinite(block)) else fallback
            else:
                v = block.mean()
            out[i, j] = v
    return out


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation of a boolean mask by whole-pixel shifts."""
    padded = np.pad(mask, radius)
    out = np.zeros_like(mask)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out |= padded[dy : dy + mask.shape[0], dx : dx + mask.shape[1]]
    return out


def _analysis_window(pixels: np.ndarray, mask: Optional[np.ndarray]):
    """Fixed-size crop around the contact region plus its local mask."""
    if mask is None or not mask.any():
        return pixels, None
    rows, cols = np.nonzero(mask)
    h, w = pixels.shape
    r0 = int(np.clip(round(rows.mean()) - _WINDOW // 2, 0, h - _WINDOW))
    c0 = int(np.clip(round(cols.mean()) - _WINDOW // 2, 0, w - _WINDOW))
    sl = (slice(r0, r0 + _WINDOW), slice(c0, c0 + _WINDOW))
    return pixels[sl], mask[sl]


def extract_descriptor(img: TactileImage, contact_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """270-vector describing the contact region (full frame if no mask).

    The normalized-patch and spectral components are computed with the
    marker dots masked out, so they answer "what relief is pressed into
    the gel"; the gradient histogram is computed on the raw resample, so
    the dot layout (and hence the displacement pattern) stays visible to
    the classifier even on zero-relief surfaces.
    """
    if contact_mask is not None and np.asarray(contact_mask).shape != img.pixels.shape:
        raise ValueError("contact mask must match the image size")
    pixels, mask = _analysis_window(img.pixels, contact_mask)

    surface = pixels.copy()
    # the cut tracks the window median, so a brightness rescale masks
    # the same pixels and the normalized patch comes out unchanged
    surface[_dilate(pixels < _DOT_CUT_FRAC * np.median(pixels), _DOT_PAD)] = np.nan
    if mask is not None:
        surface[~mask] = np.nan
    patch = _block_reduce(surface, _PATCH, _PATCH, median=True)
    std = patch.std()
    patch = (patch - patch.mean()) / std if std > _FLAT_STD else np.zeros_like(patch)

    raw = _block_reduce(pixels, _PATCH, _PATCH, median=False)
    gy, gx = np.gradient(raw)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    bins = np.clip(((ang + np.pi) / (2.0 * np.pi) * _N_ORIENT).astype(int), 0, _N_ORIENT - 1)
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=_N_ORIENT)
    total = hist.sum()
    hist = hist / total if total > 1e-12 else np.full(_N_ORIENT, 1.0 / _N_ORIENT)

    spec = np.abs(np.fft.fft2(patch)) ** 2
    spec[0, 0] = 0.0
    fy = np.fft.fftfreq(_PATCH)[:, None]
    fx = np.fft.fftfreq(_PATCH)[None, :]
    r = np.hypot(fy, fx)
    edges = np.linspace(0.0, np.sqrt(0.5) + 1e-12, _N_BANDS + 1)
    band_idx = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, _N_BANDS - 1)
    bands = np.bincount(band_idx.ravel(), weights=spec.ravel(), minlength=_N_BANDS)
    btotal = bands.sum()
    bands = bands / btotal if btotal > 1e-12 else np.full(_N_BANDS, 1.0 / _N_BANDS)

    out = np.concatenate([patch.ravel(), hist, bands])
    if not np.all(np.isfinite(out)):
        raise ValueError("descriptor is not finite")
    return out


@dataclass
class ClassifierModel:
    """Exemplar store for the texture vote.

    The vote metric is a component-weighted squared Euclidean distance:
    by default the shift-invariant histogram and spectral components
    carry the decision (weights 1) while the raw patch is excluded
    (weight 0) since its phase varies with the contact location.  The
    patch still travels in every descriptor for inspection and for the
    contact/no-contact cue it encodes.
    """

    descriptors: np.ndarray  # (n, 270)
    labels: np.ndarray  # (n,) integer class ids
    k_tex: int = 5
    weights: Tuple[float, float, float] = (0.0, 1.0, 1.0)  # patch, hist, bands
    priors: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.descriptors = np.asarray(self.descriptors, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.descriptors.ndim != 2 or self.descriptors.shape[1] != DESCRIPTOR_DIM:
            raise ValueError(f"descriptors must be (n, {DESCRIPTOR_DIM})")
        if self.labels.shape != (len(self.descriptors),):
            raise ValueError("one label per descriptor required")
        if self.k_tex < 1:
            raise ValueError("k_tex must be at least 1")
        if any(w < 0.0 for w in self.weights):
            raise ValueError("metric weights must be non-negative")
        counts = np.bincount(self.labels, minlength=N_CLASSES)
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= N_CLASSES:
            raise ValueError("labels must lie in [0, 7)")
        if np.any(counts < self.k_tex):
            raise ValueError("every class needs at least k_tex exemplars")
        if self.priors is None:
            self.priors = counts / counts.sum()
        self.priors = np.asarray(self.priors, dtype=float)

    def metric_scale(self) -> np.ndarray:
        wp, wh, wb = self.weights
        return np.concatenate(
            [
                np.full(_PATCH * _PATCH, np.sqrt(wp)),
                np.full(_N_ORIENT, np.sqrt(wh)),
                np.full(_N_BANDS, np.sqrt(wb)),
            ]
        )


def train_classifier(
    descriptors: np.ndarray, labels: Sequence[int], k_tex: int = 5
) -> ClassifierModel:
    return ClassifierModel(descriptors, np.asarray(labels), k_tex=k_tex)


def classify(d: np.ndarray, model: ClassifierModel) -> np.ndarray:
    """Smoothed per-class likelihoods from the k-nearest exemplar vote.

    p_i = (votes_i + 0.1) / (k_tex + 0.7); always positive, sums to 1.
    Distance ties break toward the lower exemplar index.
    """
    q = np.asarray(d, dtype=float).reshape(DESCRIPTOR_DIM)
    scale = model.metric_scale()
    diff = (model.descriptors - q) * scale
    d2 = np.sum(diff * diff, axis=1)
    order = np.lexsort((np.arange(len(d2)), d2))[: model.k_tex]
    votes = np.bincount(model.labels[order], minlength=N_CLASSES)
    return (votes + _BETA) / (model.k_tex + N_CLASSES * _BETA)


@dataclass
class ScoreState:
    """Accumulated class scores: previous state weighted 5x per frame.

    ``scores`` stays on the probability simplex; ``raw`` keeps the
    pre-normalization vector of the latest update so the argmax
    equivalence between the two is directly checkable.
    """

    scores: np.ndarray = field(default_factory=lambda: np.full(N_CLASSES, 1.0 / N_CLASSES))
    k: int = 0
    raw: np.ndarray = field(default_factory=lambda: np.full(N_CLASSES, 1.0 / N_CLASSES))

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.raw = np.asarray(self.raw, dtype=float)
        if self.scores.shape != (N_CLASSES,) or np.any(self.scores < 0.0):
            raise ValueError("scores must be 7 nonnegative values")
        if abs(self.scores.sum() - 1.0) > 1e-12:
            raise ValueError("scores must sum to 1")


def accumulate(s: ScoreState, p: np.ndarray) -> ScoreState:
    """One evidence step: raw = 5*s + p, renormalized onto the simplex."""
    p = np.asarray(p, dtype=float).reshape(N_CLASSES)
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a likelihood vector summing to 1")
    raw = _MEMORY * s.scores + p
    return ScoreState(raw / raw.sum(), k=s.k + 1, raw=raw)


def predict(s: ScoreState) -> TextureClass:
    """Highest accumulated score; ties go to the lowest class index."""
    return TextureClass(int(np.argmax(s.scores)))


@dataclass
class ConfusionResult:
    counts: np.ndarray  # (7, 7) rows = truth, cols = prediction
    per_class: np.ndarray  # (7,) diagonal over row sums, NaN when unseen
    average: float  # trace over total


def confusion_matrix(truth: Sequence[int], pred: Sequence[int]) -> ConfusionResult:
    t = np.asarray(truth, dtype=int)
    p = np.asarray(pred, dtype=int)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("truth and prediction streams must have equal length")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    np.add.at(counts, (t, p), 1)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(row > 0, np.diag(counts) / row, np.nan)
    return ConfusionResult(counts, per_class, float(np.trace(counts) / max(len(t), 1)))


def contact_disk_mask(
    pad: GelPadModel, center_mm: np.ndarray, normal_force: float
) -> Optional[np.ndarray]:
    """Boolean disk where texture shows through; None when not pressing."""
    if normal_force <= 0.0:
        return None
    radius_px = pad.disk_coeff * np.sqrt(normal_force) * pad.px_per_mm
    center_px = pad.mm_to_px(np.asarray(center_mm, dtype=float))[0]
    ys = np.arange(pad.image_height) - center_px[1]
    xs = np.arange(pad.image_width) - center_px[0]
    return (ys[:, None] ** 2 + xs[None, :] ** 2) <= radius_px**2


def generate_texture_dataset(
    pad: GelPadModel,
    per_class: int = 300,
    seed: int = 0,
    texture_seeds: int = 10,
) -> Tuple[np.ndarray, np.ndarray]:
    """Labeled descriptors for all seven classes from the forward model.

    Contact classes render random pushes against procedurally generated
    reliefs (several relief seeds per class); the no-contact class
    renders undisturbed marker frames.  Descriptors of contact frames
    use the known contact disk; no-contact frames use the full frame.
    """
    if per_class < 1:
        raise ValueError("per_class must be at least 1")
    rng = np.random.default_rng(seed)
    maps = {
        cls: [synth_texture(cls, s, pad) for s in range(texture_seeds)]
        for cls in list(TextureClass)[1:]
    }
    descriptors = np.empty((N_CLASSES * per_class, DESCRIPTOR_DIM))
    labels = np.empty(N_CLASSES * per_class, dtype=int)
    i = 0
    for cls in TextureClass:
        for _ in range(per_class):
            if cls == TextureClass.NON_CONTACT:
                contact = Wrench(np.zeros(3), np.zeros(3), "E")
                fld = marker_displacements(contact, pad, np.zeros(2), rng=rng)
                img = render_tactile_image(fld, None, pad)
                desc = extract_descriptor(img, None)
            else:
                force = np.array(
                    [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(2.0, 9.0)]
                )
                center = rng.uniform([-3.0, -2.0], [3.0, 2.0])
                contact = Wrench(force, np.zeros(3), "E")
                fld = marker_displacements(contact, pad, center, rng=rng)
                tex = maps[cls][int(rng.integers(texture_seeds))]
                img = render_tactile_image(fld, tex, pad, rng=rng)
                desc = extract_descriptor(img, contact_disk_mask(pad, center, force[2]))
            descriptors[i] = desc
            labels[i] = int(cls)
            i += 1
    return descriptors, labels
