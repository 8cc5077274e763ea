"""Texture synthesis, descriptor, classifier, and accumulator checks.

The accumulator's convergence values are asserted against exact
rational arithmetic computed in the test, and the wood-versus-foam
spectral property is checked with an independently coded 2-D spectrum.
"""
from fractions import Fraction

import numpy as np
import pytest

from aerotact.frames import Wrench
from aerotact.gelpad import GelPadModel, TactileImage, marker_displacements, render_tactile_image
from aerotact.recognition import (
    ClassifierModel,
    DESCRIPTOR_DIM,
    ScoreState,
    accumulate,
    classify,
    confusion_matrix,
    contact_disk_mask,
    extract_descriptor,
    generate_texture_dataset,
    predict,
    train_classifier,
)
from aerotact.textures import TextureClass, synth_texture

PAD = GelPadModel()


def _contact_frame(force, center, texture, seed=1):
    rng = np.random.default_rng(seed)
    fld = marker_displacements(Wrench(np.asarray(force, float), np.zeros(3), "E"), PAD, center, rng=rng)
    return render_tactile_image(fld, texture, PAD, rng=rng)


def test_class_encoding_is_stable():
    assert len(TextureClass) == 7
    assert [int(c) for c in TextureClass] == list(range(7))
    assert TextureClass.NON_CONTACT == 0
    assert TextureClass.PRINTED_FLAT_PAPER == 1
    assert TextureClass.FOAM_MAT == 6


def test_synth_determinism_and_shapes():
    for cls in list(TextureClass)[1:]:
        a = synth_texture(cls, 3, PAD)
        b = synth_texture(cls, 3, PAD)
        assert a.shape == (PAD.image_height, PAD.image_width)
        assert np.all(np.isfinite(a))
        assert np.array_equal(a, b)
    w0 = synth_texture(TextureClass.WOOD_GRAIN, 0, PAD)
    w1 = synth_texture(TextureClass.WOOD_GRAIN, 1, PAD)
    assert not np.array_equal(w0, w1)


def test_flat_paper_is_zero_and_non_contact_rejected():
    assert np.array_equal(
        synth_texture(TextureClass.PRINTED_FLAT_PAPER, 11, PAD),
        np.zeros((PAD.image_height, PAD.image_width)),
    )
    with pytest.raises(ValueError):
        synth_texture(TextureClass.NON_CONTACT, 0, PAD)


def _orientation_ratio(height_map):
    spec = np.abs(np.fft.fft2(height_map - height_map.mean())) ** 2
    fy = np.fft.fftfreq(height_map.shape[0])[:, None]
    fx = np.fft.fftfreq(height_map.shape[1])[None, :]
    keep = np.hypot(fy, fx) > 0.01
    ang = np.mod(np.arctan2(fy, fx), np.pi)
    bins = np.minimum((ang / np.pi * 12).astype(int), 11)
    energy = np.bincount(bins[keep].ravel(), weights=spec[keep].ravel(), minlength=12)
    top = int(np.argmax(energy))
    return energy[top] / energy[(top + 6) % 12]


def test_wood_is_oriented_foam_is_not():
    for seed in range(4):
        wood = _orientation_ratio(synth_texture(TextureClass.WOOD_GRAIN, seed, PAD))
        foam = _orientation_ratio(synth_texture(TextureClass.FOAM_MAT, seed, PAD))
        assert wood > 50.0
        assert foam < 1.5


def test_descriptor_shape_and_determinism():
    img = _contact_frame([1.0, -0.5, 5.0], np.array([0.5, -0.3]), synth_texture(TextureClass.WOOD_GRAIN, 0, PAD))
    mask = contact_disk_mask(PAD, np.array([0.5, -0.3]), 5.0)
    d1 = extract_descriptor(img, mask)
    d2 = extract_descriptor(img, mask)
    assert d1.shape == (DESCRIPTOR_DIM,)
    assert np.array_equal(d1, d2)
    assert np.all(np.isfinite(d1))


def test_descriptor_component_invariants():
    img = _contact_frame([1.0, 0.5, 6.0], np.zeros(2), synth_texture(TextureClass.QUARTZ_STONE, 2, PAD))
    mask = contact_disk_mask(PAD, np.zeros(2), 6.0)
    d = extract_descriptor(img, mask)
    patch, hist, bands = d[:256], d[256:264], d[264:]
    assert abs(patch.mean()) < 1e-12
    assert abs(patch.std() - 1.0) < 1e-9
    assert np.all(hist >= 0.0) and abs(hist.sum() - 1.0) < 1e-12
    assert np.all(bands >= 0.0) and abs(bands.sum() - 1.0) < 1e-12


def test_descriptor_brightness_invariance():
    img = _contact_frame([1.0, -0.5, 5.0], np.array([0.5, -0.3]), synth_texture(TextureClass.WOOD_GRAIN, 0, PAD))
    mask = contact_disk_mask(PAD, np.array([0.5, -0.3]), 5.0)
    assert not np.any(img.pixels * 1.1 > 1.0)
    brighter = TactileImage(img.pixels * 1.1, t=img.t)
    d1 = extract_descriptor(img, mask)
    d2 = extract_descriptor(brighter, mask)
    assert np.max(np.abs(d1[:256] - d2[:256])) < 1e-9


def test_flat_contact_differs_from_non_contact():
    flat = synth_texture(TextureClass.PRINTED_FLAT_PAPER, 0, PAD)
    contact = _contact_frame([0.5, 0.2, 5.0], np.zeros(2), flat)
    d_contact = extract_descriptor(contact, contact_disk_mask(PAD, np.zeros(2), 5.0))
    rng = np.random.default_rng(5)
    fld = marker_displacements(Wrench(np.zeros(3), np.zeros(3), "E"), PAD, np.zeros(2), rng=rng)
    d_free = extract_descriptor(render_tactile_image(fld, None, PAD), None)
    assert np.linalg.norm(d_contact - d_free) > 0.01


def test_descriptor_mask_shape_rejected():
    img = _contact_frame([0, 0, 5.0], np.zeros(2), None)
    with pytest.raises(ValueError):
        extract_descriptor(img, np.ones((10, 10), dtype=bool))


def test_contact_disk_mask_geometry():
    assert contact_disk_mask(PAD, np.zeros(2), 0.0) is None
    mask = contact_disk_mask(PAD, np.zeros(2), 4.0)
    radius_px = PAD.disk_coeff * 2.0 * PAD.px_per_mm
    area = np.pi * radius_px**2
    assert abs(mask.sum() - area) / area < 0.02
    ys, xs = np.nonzero(mask)
    assert abs(ys.mean() - (PAD.image_height - 1) / 2) < 1.0
    assert abs(xs.mean() - (PAD.image_width - 1) / 2) < 1.0


def _tiny_model():
    rng = np.random.default_rng(0)
    desc = rng.normal(size=(14, DESCRIPTOR_DIM))
    labels = np.repeat(np.arange(7), 2)
    return ClassifierModel(desc, labels, k_tex=2)


def test_model_validation():
    rng = np.random.default_rng(0)
    desc = rng.normal(size=(14, DESCRIPTOR_DIM))
    labels = np.repeat(np.arange(7), 2)
    with pytest.raises(ValueError):
        ClassifierModel(desc, labels, k_tex=3)  # only 2 exemplars per class
    with pytest.raises(ValueError):
        ClassifierModel(desc[:, :100], labels)
    with pytest.raises(ValueError):
        ClassifierModel(desc, labels, k_tex=2, weights=(-1.0, 1.0, 1.0))
    bad = labels.copy()
    bad[0] = 9
    with pytest.raises(ValueError):
        ClassifierModel(desc, bad, k_tex=2)
    model = _tiny_model()
    assert np.allclose(model.priors, np.full(7, 2 / 14))


def test_classify_exact_exemplar_and_smoothing():
    base = _tiny_model()
    model = ClassifierModel(base.descriptors, base.labels, k_tex=1)
    # query equal to a stored exemplar, single neighbor: its class wins
    p = classify(model.descriptors[6], model)
    assert abs(p.sum() - 1.0) < 1e-12
    assert int(np.argmax(p)) == model.labels[6]
    # all votes for one class: p follows the smoothed count formula
    desc = np.zeros((14, DESCRIPTOR_DIM))
    desc[model.labels != 3] = 100.0  # park every other class far away
    model2 = ClassifierModel(desc, model.labels, k_tex=2)
    p2 = classify(np.zeros(DESCRIPTOR_DIM), model2)
    assert abs(p2[3] - (2 + 0.1) / (2 + 0.7)) < 1e-12
    for c in range(7):
        if c != 3:
            assert abs(p2[c] - 0.1 / (2 + 0.7)) < 1e-12


def test_classify_tie_breaks_by_lower_exemplar_index():
    desc = np.zeros((14, DESCRIPTOR_DIM))
    desc[2:] = 50.0
    labels = np.array([4, 5] + [0, 0, 1, 1, 2, 2, 3, 3, 5, 6, 6, 4])
    model = ClassifierModel(desc, labels, k_tex=1)
    p = classify(np.zeros(DESCRIPTOR_DIM), model)
    # exemplars 0 and 1 are both at distance zero; index 0 (class 4) wins
    assert int(np.argmax(p)) == 4


def test_likelihood_simplex_on_random_queries():
    model = _tiny_model()
    rng = np.random.default_rng(3)
    for _ in range(25):
        p = classify(rng.normal(size=DESCRIPTOR_DIM), model)
        assert np.all(p > 0.0)
        assert abs(p.sum() - 1.0) < 1e-12


def test_accumulate_uniform_fixed_point():
    s = ScoreState()
    s2 = accumulate(s, np.full(7, 1.0 / 7.0))
    assert np.allclose(s2.scores, 1.0 / 7.0, atol=1e-15)
    assert s2.k == 1


def test_accumulate_one_hot_convergence_matches_exact_fractions():
    onehot = np.zeros(7)
    onehot[3] = 1.0
    s = ScoreState()
    exact = Fraction(1, 7)
    values = []
    for _ in range(14):
        s = accumulate(s, onehot)
        exact = (5 * exact + 1) / 6
        values.append(s.scores[3])
        assert abs(s.scores[3] - float(exact)) < 1e-12
    # exact value after 5 steps of the normalized recursion
    assert abs(values[4] - 5947 / 9072) < 1e-15
    assert values[4] < 0.93  # geometric 5/6 contraction is slower than that
    assert values[13] > 0.93  # reached at the 14th step
    assert all(b > a for a, b in zip(values, values[1:]))


def test_accumulate_argmax_equivalence_and_simplex():
    rng = np.random.default_rng(9)
    s = ScoreState()
    for _ in range(200):
        p = rng.dirichlet(np.ones(7))
        s = accumulate(s, p)
        assert int(np.argmax(s.raw)) == int(np.argmax(s.scores))
        assert abs(s.scores.sum() - 1.0) < 1e-12
        assert np.all(s.scores >= 0.0)


def test_accumulate_validates_input():
    s = ScoreState()
    with pytest.raises(ValueError):
        accumulate(s, np.full(7, 0.2))  # sums to 1.4
    bad = np.full(7, 1.0 / 7.0)
    bad[0] = -bad[0]
    with pytest.raises(ValueError):
        accumulate(s, bad / bad.sum())


def test_predict_tie_break_and_persistence():
    assert predict(ScoreState()) == TextureClass.NON_CONTACT  # uniform, lowest index
    onehot = np.zeros(7)
    onehot[5] = 1.0
    s = ScoreState()
    seen = False
    for _ in range(30):
        s = accumulate(s, onehot)
        if predict(s) == TextureClass.DIAMOND_VINYL:
            seen = True
        elif seen:
            pytest.fail("prediction flipped away after becoming argmax")
    assert seen


def test_confusion_matrix_basics():
    truth = [0, 1, 2, 3, 4, 5, 6]
    res = confusion_matrix(truth, truth)
    assert np.array_equal(res.counts, np.eye(7, dtype=int))
    assert res.average == 1.0
    res2 = confusion_matrix(truth, [2] * 7)
    assert res2.counts[:, 2].sum() == 7
    assert abs(res2.average - 1 / 7) < 1e-12
    res3 = confusion_matrix([1, 1, 2], [1, 2, 2])
    assert abs(res3.per_class[1] - 0.5) < 1e-12
    assert np.isnan(res3.per_class[0])
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0])


def test_dataset_and_classifier_end_to_end():
    desc, labels = generate_texture_dataset(PAD, per_class=40, seed=0)
    d2, l2 = generate_texture_dataset(PAD, per_class=40, seed=0)
    assert np.array_equal(desc, d2) and np.array_equal(labels, l2)
    assert np.array_equal(np.bincount(labels, minlength=7), np.full(7, 40))
    model = train_classifier(desc, labels)
    held_desc, held_labels = generate_texture_dataset(PAD, per_class=10, seed=99)
    preds = np.array([int(np.argmax(classify(d, model))) for d in held_desc])
    assert np.mean(preds == held_labels) >= 0.9
