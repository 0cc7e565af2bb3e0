import numpy as np
import pytest

from descreg.alignment import ProjectionHead, classification_scores
from descreg.catalog import ClassSplit
from descreg.config import default_config
from descreg.errors import FormatError
from descreg.regions import RegionSample
from descreg.regularizer import SamplingPolicy, sample_triplet
from descreg.similarity import build_similarity, diagonal_matrix
from descreg.simdata import ScenarioConfig, generate_dataset
from descreg.synthesizer import (
    Synthesizer,
    load_synthesizer,
    parse_synthesizer,
    real_class_means,
    save_synthesizer,
    serialize_synthesizer,
    synthesize,
    synthesizer_objective,
    train_classifier_from_synth,
    train_synthesizer,
)
from conftest import fd_gradient, relative_error


def test_synthesizer_create_and_validation():
    synth = Synthesizer.create(embed_dim=4, feature_dim=6, noise_dim=3, hidden=5)
    assert synth.embed_dim == 4 and synth.feature_dim == 6 and synth.noise_dim == 3
    with pytest.raises(ValueError):
        Synthesizer(net=ProjectionHead.create(5, 4, depth=1), noise_dim=2)
    with pytest.raises(ValueError):
        Synthesizer(net=ProjectionHead.create(5, 4, depth=2, hidden=3), noise_dim=0)
    with pytest.raises(ValueError):
        Synthesizer(net=ProjectionHead.create(5, 4, depth=2, hidden=3), noise_dim=5)


def test_synthesize_single_equals_batch_row():
    rng = np.random.default_rng(2)
    synth = Synthesizer.create(embed_dim=3, feature_dim=4, noise_dim=2, hidden=6, rng=rng)
    emb = rng.normal(size=3)
    noise = rng.normal(size=(5, 2))
    batch = synthesize(synth, emb, noise)
    assert batch.shape == (5, 4)
    for i in range(5):
        np.testing.assert_allclose(synthesize(synth, emb, noise[i]), batch[i], atol=1e-12)
    # Deterministic in its inputs.
    np.testing.assert_array_equal(batch, synthesize(synth, emb, noise))
    with pytest.raises(ValueError):
        synthesize(synth, rng.normal(size=4), noise)
    with pytest.raises(ValueError):
        synthesize(synth, emb, rng.normal(size=(5, 3)))


def _affine_synth():
    """A generator in its linear regime: out = 2 * (emb + z + 10)."""
    w0 = np.array([[1.0, 1.0]])
    b0 = np.array([10.0])
    w1 = np.array([[2.0]])
    b1 = np.array([0.0])
    return Synthesizer(net=ProjectionHead([w0, w1], [b0, b1]), noise_dim=1)


def test_objective_moment_hand_value():
    synth = _affine_synth()
    embeddings = np.array([[0.5], [-0.25]])  # seen, unseen
    noise = np.array([[[0.1], [0.3]], [[0.0], [0.2]]])  # means 0.2 and 0.1
    # Seen mean output = 2*(0.5 + 0.2 + 10) = 21.4; real mean 21.0.
    real_means = np.array([[21.0]])
    sim = diagonal_matrix(2)
    policy = SamplingPolicy()
    loss = synthesizer_objective(
        synth, embeddings, real_means, sim, policy, lam=0.0, noise=noise, triplet_rng=0
    )
    assert loss.value == pytest.approx(0.16, abs=1e-12)
    # d value / d b1 = 2 * residual / n_seen = 0.8 (unseen class contributes 0).
    assert loss.gradients["gen.b1"][0] == pytest.approx(0.8, abs=1e-12)
    assert set(loss.gradients) == {"gen.w0", "gen.b0", "gen.w1", "gen.b1"}


def test_objective_validation():
    synth = _affine_synth()
    embeddings = np.array([[0.5], [-0.25]])
    sim = diagonal_matrix(2)
    policy = SamplingPolicy()
    with pytest.raises(ValueError):
        synthesizer_objective(
            synth, embeddings, np.zeros((3, 1)), sim, policy, 0.0,
            np.zeros((2, 1, 1)), 0,
        )
    with pytest.raises(ValueError):
        synthesizer_objective(
            synth, embeddings, np.zeros((1, 1)), sim, policy, 0.0,
            np.zeros((2, 1, 2)), 0,  # wrong noise dim
        )
    with pytest.raises(ValueError):
        synthesizer_objective(
            synth, embeddings, np.zeros((1, 1)), sim, policy, -1.0,
            np.zeros((2, 1, 1)), 0,
        )


def _replayed_triplets(n, sim, policy, seed):
    rng = np.random.default_rng(seed)
    trips = []
    for anchor in range(n):
        for _ in range(policy.triplets_per_class):
            trips.append(sample_triplet(anchor, sim, policy, rng))
    return trips


def _away_from_kinks(synth, embeddings, noise, sim, policy, seed, lam):
    """True when no relu preact or triplet hinge sits near its kink."""
    n, draws, _ = noise.shape
    tiled = np.repeat(embeddings, draws, axis=0)
    flat = np.concatenate([tiled, noise.reshape(n * draws, -1)], axis=1)
    preact = flat @ synth.net.weights[0].T + synth.net.biases[0]
    if np.min(np.abs(preact)) < 1e-4:
        return False
    if lam == 0.0:
        return True
    means = synthesize_means(synth, embeddings, noise)
    for trip in _replayed_triplets(n, sim, policy, seed):
        d_pos = np.linalg.norm(means[trip.anchor] - means[trip.positive])
        d_neg = np.linalg.norm(means[trip.anchor] - means[trip.negative])
        if min(d_pos, d_neg) < 1e-6:
            return False
        if abs(d_pos - d_neg + trip.margin) < 1e-4:
            return False
    return True


def synthesize_means(synth, embeddings, noise):
    return np.stack(
        [synthesize(synth, emb, z).mean(axis=0) for emb, z in zip(embeddings, noise)]
    )


def test_objective_gradients_match_finite_differences():
    rng = np.random.default_rng(17)
    policy = SamplingPolicy()
    lam = 0.7
    checked = 0
    attempts = 0
    while checked < 3 and attempts < 60:
        attempts += 1
        synth = Synthesizer.create(embed_dim=3, feature_dim=4, noise_dim=2, hidden=5, rng=rng)
        embeddings = rng.normal(size=(4, 3))
        noise = rng.normal(size=(4, 2, 2))
        real_means = rng.normal(size=(3, 4))
        sim = build_similarity(rng.normal(size=(4, 6)), tau=1.0)
        seed = int(rng.integers(1 << 30))
        if not _away_from_kinks(synth, embeddings, noise, sim, policy, seed, lam):
            continue

        def value(_unused):
            return synthesizer_objective(
                synth, embeddings, real_means, sim, policy, lam, noise, seed
            ).value

        analytic = synthesizer_objective(
            synth, embeddings, real_means, sim, policy, lam, noise, seed
        ).gradients
        blocks = {
            "gen.w0": synth.net.weights[0],
            "gen.b0": synth.net.biases[0],
            "gen.w1": synth.net.weights[1],
            "gen.b1": synth.net.biases[1],
        }
        for key, param in blocks.items():
            numeric = fd_gradient(lambda _: value(None), param)
            assert relative_error(analytic[key], numeric) < 1e-5, key
        checked += 1
    assert checked == 3


def test_real_class_means():
    split = ClassSplit(("a", "b"), ("u",))
    regions = [
        RegionSample("i", (0, 0, 1, 1), "a", np.array([1.0, 0.0])),
        RegionSample("i", (0, 0, 1, 1), "a", np.array([3.0, 2.0])),
        RegionSample("i", (0, 0, 1, 1), "b", np.array([0.0, 5.0])),
        RegionSample("i", (0, 0, 1, 1), "u", np.array([9.0, 9.0])),  # ignored
        RegionSample("i", (0, 0, 1, 1), "__bg__", np.array([7.0, 7.0])),  # ignored
    ]
    means = real_class_means(regions, split)
    np.testing.assert_allclose(means, [[2.0, 1.0], [0.0, 5.0]])
    with pytest.raises(ValueError, match="b"):
        real_class_means(regions[:2], split)


def test_synthesizer_round_trip(tmp_path):
    synth = Synthesizer.create(
        embed_dim=3, feature_dim=4, noise_dim=2, hidden=5, rng=np.random.default_rng(8)
    )
    text = serialize_synthesizer(synth)
    back = parse_synthesizer(text)
    assert back.noise_dim == 2
    for w1, w2 in zip(synth.net.weights, back.net.weights):
        np.testing.assert_array_equal(w1, w2)
    assert serialize_synthesizer(back) == text
    path = tmp_path / "gen.txt"
    save_synthesizer(synth, path)
    emb = np.ones(3)
    noise = np.ones(2)
    np.testing.assert_array_equal(
        synthesize(load_synthesizer(path), emb, noise), synthesize(synth, emb, noise)
    )


def test_parse_synthesizer_rejects_corruption():
    good = serialize_synthesizer(
        Synthesizer.create(embed_dim=2, feature_dim=2, noise_dim=1, hidden=2)
    )
    with pytest.raises(FormatError):
        parse_synthesizer("wrong\n" + good.split("\n", 1)[1])
    with pytest.raises(FormatError):
        parse_synthesizer(good.replace("noise_dim 1", "noise_dim x"))
    with pytest.raises(FormatError):
        parse_synthesizer(good.replace("head 2", "head 3"))
    with pytest.raises(FormatError):
        parse_synthesizer(good + "extra\n")


def _small_setup():
    scenario = ScenarioConfig(
        n_seen=5, n_unseen=2, feature_dim=24, regions_per_class=30, images=6, seed=2
    )
    ds = generate_dataset(scenario)
    config = default_config()
    config.set("synth.hidden", 16)
    config.set("cls.epochs", 4)
    sim = build_similarity(ds.catalog.descriptions.vectors, tau=config["reg.tau"])
    return ds, config, sim


def test_train_synthesizer_matches_seen_moments():
    ds, config, sim = _small_setup()
    config.set("reg.lambda", 0.0)  # isolate the moment-matching term
    means = real_class_means(ds.train_regions, ds.catalog.split)
    synth = train_synthesizer(ds.catalog, ds.train_regions, sim, config)
    rng = np.random.default_rng(99)
    embeddings = ds.catalog.source_matrix(config["embedding_source"])
    gaps = []
    for j in range(ds.catalog.split.n_seen):
        synth_mean = synthesize(synth, embeddings[j], rng.normal(size=(200, synth.noise_dim))).mean(axis=0)
        gaps.append(np.linalg.norm(synth_mean - means[j]))
    # Untrained generators start around a unit away; trained ones land close.
    assert max(gaps) < 0.1


def test_triplet_term_changes_the_generator():
    ds, config, sim = _small_setup()
    plain = config.copy()
    plain.set("reg.lambda", 0.0)
    with_reg = train_synthesizer(ds.catalog, ds.train_regions, sim, config)
    without = train_synthesizer(ds.catalog, ds.train_regions, sim, plain)
    assert serialize_synthesizer(with_reg) != serialize_synthesizer(without)


def test_train_synthesizer_deterministic():
    ds, config, sim = _small_setup()
    a = train_synthesizer(ds.catalog, ds.train_regions, sim, config)
    b = train_synthesizer(ds.catalog, ds.train_regions, sim, config)
    assert serialize_synthesizer(a) == serialize_synthesizer(b)


def test_train_classifier_from_synth_restores_split():
    ds, config, sim = _small_setup()
    config.set("reg.lambda", 0.0)  # pure moment matching; seen classes recoverable
    config.set("cls.epochs", 20)
    synth = train_synthesizer(ds.catalog, ds.train_regions, sim, config)
    model = train_classifier_from_synth(synth, ds.catalog, config)
    assert model.split == ds.catalog.split
    assert model.embedding_source == "prototype"
    assert model.source_embeddings.shape == (7, ds.scenario.feature_dim)
    # Prototypes classify the seen-class regions they were fit to mimic.
    features = np.stack([r.feature for r in ds.train_regions if not r.is_background])
    labels = [r.label for r in ds.train_regions if not r.is_background]
    scores = classification_scores(model, features, "gzsd")[:, : ds.catalog.n_classes]
    names = ds.catalog.class_names
    predicted = [names[i] for i in scores.argmax(axis=1)]
    accuracy = np.mean([p == t for p, t in zip(predicted, labels)])
    assert accuracy > 0.6
