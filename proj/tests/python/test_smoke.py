"""End-to-end smoke tests for the python bindings.

Everything here is intentionally tiny: the point is that the bound surface
round-trips values faithfully, not that the models reach any quality bar
(the C++ suites own that).
"""

import math

import numpy as np
import pytest

import kdiag


def test_auc_known_values():
    assert kdiag.auc([0.1, 0.9], [0, 1]) == 1.0
    assert kdiag.auc([0.9, 0.1], [0, 1]) == 0.0
    assert kdiag.auc([0.5, 0.5], [0, 1]) == 0.5
    # records labeled -1 are excluded before scoring
    assert kdiag.auc([0.99, 0.1, 0.9], [-1, 0, 1]) == 1.0
    assert kdiag.auc([0.1, 0.2], [1, 1]) is None
    with pytest.raises(kdiag.Error):
        kdiag.auc([0.1], [5])


def test_bootstrap_ci_is_deterministic():
    scores = [0.1, 0.8, 0.4, 0.9, 0.3, 0.7]
    labels = [0, 1, 0, 1, 0, 1]
    a = kdiag.bootstrap_ci(scores, labels, n_boot=64, level=0.9, seed=3)
    b = kdiag.bootstrap_ci(scores, labels, n_boot=64, level=0.9, seed=3)
    assert a == b
    assert 0.0 <= a[0] <= a[1] <= 1.0


def test_masked_cross_entropy_masks_unknowns():
    logits = np.array([[0.2, -0.1], [30.0, -30.0]])
    loss, count = kdiag.masked_cross_entropy(logits, [1, -1])
    assert count == 1
    expected = math.log(math.exp(0.2) + math.exp(-0.1)) - (-0.1)
    assert loss == pytest.approx(expected, rel=1e-12)


def test_contrastive_loss_single_pair_is_zero():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(1, 8))
    assert kdiag.contrastive_loss(a, a, tau=0.07) == 0.0


def test_catalog_and_rendering():
    cat = kdiag.generate_catalog(6, 12, seed=1)
    assert len(cat) == 6
    assert all(c.name == kdiag.normalize_name(c.name) for c in cat.concepts)
    assert all(len(c.attributes) == cat.attribute_len for c in cat.concepts)

    ds = kdiag.render_dataset(cat, image_size=16, samples_per_class=4, seed=1)
    assert len(ds) == 24
    assert ds.class_names == [c.name for c in cat.concepts]
    px = ds.pixels(0)
    assert px.shape == (16, 16)
    assert 0.0 <= px.min() and px.max() <= 1.0
    assert set(ds.labels(0)) <= {-1, 0, 1}


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    path = str(tmp_path / "img.pgm")
    kdiag.write_pgm(path, img)
    back = kdiag.read_pgm(path)
    assert back.shape == (8, 8)
    assert np.abs(back - img).max() <= 1.0 / 255.0


def test_training_scoring_and_attention(tmp_path):
    cat = kdiag.generate_catalog(4, 12, seed=2)
    ds = kdiag.render_dataset(cat, image_size=16, samples_per_class=8, seed=2)

    ke = kdiag.train_knowledge_encoder(cat, d=32, heads=4, steps=20, batch_pairs=4, seed=2)
    assert ke.probe_loss_initial > 0.0
    emb = ke.encoder.embed_texts([c.name for c in cat.concepts])
    assert emb.shape == (4, 32)
    ke.encoder.freeze()

    model = kdiag.train_classifier(
        ds, encoder=ke.encoder, mode="ke", d=32, c1=4, c2=8,
        decoder_layers=1, heads=4, epochs=2, batch_size=8, seed=2,
    )
    assert model.mode == "ke"
    assert model.class_names == ds.class_names

    scores = model.score(ds)
    assert scores.shape == (len(ds), 4)
    assert np.isfinite(scores).all()
    assert ((scores >= 0) & (scores <= 1)).all()

    report = model.evaluate(ds, n_boot=16, seed=5)
    assert [c["name"] for c in report["classes"]] == ds.class_names
    assert report["mean_auc"] is None or 0.0 <= report["mean_auc"] <= 1.0
    for c in report["classes"]:
        if c["ci"] is not None:
            assert 0.0 <= c["ci"][0] <= c["ci"][1] <= 1.0

    heat = model.attention(ds.pixels(0), 0)
    assert heat.sum() == pytest.approx(1.0, abs=1e-4)
    assert (heat >= 0).all()

    path = str(tmp_path / "model.ckpt")
    model.save(path, run_config="mode = ke")
    loaded = kdiag.load_classifier(path)
    assert np.array_equal(loaded.score(ds), scores)


def test_zero_shot_protocol():
    cat = kdiag.generate_zero_shot_catalog(3, 1, 0, 12, seed=4)
    ds = kdiag.render_dataset(cat, image_size=16, samples_per_class=8, seed=4)
    seen = [c.name for c in cat.concepts[:3]]
    unseen = [cat.concepts[3].name]

    # restrict training to the seen classes by hiding the unseen column
    train_ds = kdiag.hide_labels(ds, set(seen))
    ke = kdiag.train_knowledge_encoder(cat, d=32, heads=4, steps=15, batch_pairs=4, seed=4)
    ke.encoder.freeze()
    # hide_labels keeps all four columns; train on the seen-only render instead
    seen_cat_ds = kdiag.render_dataset(cat, image_size=16, num_classes=3,
                                       samples_per_class=8, seed=4)
    model = kdiag.train_classifier(
        seen_cat_ds, encoder=ke.encoder, mode="ke_lp", d=32, c1=4, c2=8,
        decoder_layers=1, heads=4, prompt_count=4, epochs=2, batch_size=8, seed=4,
    )

    report = model.zero_shot(unseen, ds, encoder=ke.encoder)
    assert [c["name"] for c in report["classes"]] == unseen

    with pytest.raises(kdiag.Error):
        model.zero_shot([seen[0]], ds, encoder=ke.encoder)
    assert train_ds.class_names == ds.class_names


def test_error_types_are_catchable():
    with pytest.raises(kdiag.Error):
        kdiag.generate_catalog(0, 12, seed=0)
    with pytest.raises(kdiag.Error):
        kdiag.bootstrap_ci([0.5, 0.6], [0, 1], n_boot=0)
