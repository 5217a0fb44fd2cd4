import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gorp.errors import DataError, ParseError, SpecError
from gorp.net import LayerSpec, ModelSpec, init_model, logits
from gorp.tasks import TaskDataset, gen_permuted, gen_rotated, load_dataset, save_dataset, save_sequence


def test_same_seed_bitwise_identical():
    a, b = gen_rotated(3, 200, d=8, seed=5), gen_rotated(3, 200, d=8, seed=5)
    assert all(x.equals(y) for x, y in zip(a.tasks, b.tasks))


def test_different_seed_differs():
    a, b = gen_rotated(1, 50, d=8, seed=5), gen_rotated(1, 50, d=8, seed=6)
    assert not a.tasks[0].equals(b.tasks[0])


def test_zero_angle_gives_identical_distributions():
    seq = gen_rotated(3, 100, d=6, angle_step=0.0, seed=1)
    for task in seq.tasks[1:]:
        np.testing.assert_array_equal(task.meta["class_means"], seq.tasks[0].meta["class_means"])


def test_noise_free_two_class_is_linearly_separable():
    seq = gen_rotated(2, 100, d=5, C=2, noise_sigma=0.0, seed=2)
    for task in seq.tasks:
        mu = task.meta["class_means"]
        w = mu[1] - mu[0]
        b = -0.5 * (mu[1] @ mu[1] - mu[0] @ mu[0])
        pred = (task.x_train @ w + b > 0).astype(int)
        assert np.mean(pred == task.y_train) == 1.0


def test_shapes_and_split_sizes():
    seq = gen_rotated(2, 40, d=7, C=3, seed=0, holdout=True)
    assert len(seq) == 2 and seq.holdout is not None
    t = seq.tasks[0]
    assert t.x_train.shape == (40, 7) and t.x_test.shape == (20, 7)


def test_rejects_degenerate_specs():
    with pytest.raises(SpecError):
        gen_rotated(d=1)
    with pytest.raises(SpecError):
        gen_rotated(C=1)


def test_class_marginals_balanced():
    task = gen_rotated(1, 1001, d=4, C=4, seed=3).tasks[0]
    counts = np.bincount(task.y_train, minlength=4)
    assert np.all(np.abs(counts - 1001 / 4) <= 0.1 * 1001 / 4)


def test_empirical_means_near_class_means():
    task = gen_rotated(1, 4000, d=6, C=4, noise_sigma=0.4, seed=4).tasks[0]
    mu = task.meta["class_means"]
    for c in range(4):
        emp = task.x_train[task.y_train == c].mean(axis=0)
        assert np.linalg.norm(emp - mu[c]) <= 5 * 0.4 * np.sqrt(6 / 1000)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(2, 6), st.floats(-180, 180), st.floats(0.1, 5))
def test_rotation_is_an_isometry(seed, d, c, angle, radius):
    seq = gen_rotated(3, 4, d=d, C=c, angle_step=angle, seed=seed, radius=radius)
    ref = seq.tasks[0].meta["class_means"]
    gram = ref @ ref.T
    for task in seq.tasks[1:]:
        mu = task.meta["class_means"]
        np.testing.assert_allclose(mu @ mu.T, gram, atol=1e-10 * max(1.0, radius**2))
        np.testing.assert_allclose(np.linalg.norm(mu, axis=1), radius, atol=1e-10 * max(1.0, radius))


def test_permuted_first_task_is_base_and_columns_match():
    base = gen_rotated(1, 30, d=6, seed=0).tasks[0]
    seq = gen_permuted(base, 3, seed=9)
    assert seq.tasks[0] is base
    for task in seq.tasks[1:]:
        perm = task.meta["permutation"]
        assert sorted(perm.tolist()) == list(range(6))
        np.testing.assert_array_equal(task.x_train, base.x_train[:, perm])
        np.testing.assert_array_equal(task.y_test, base.y_test)


def test_permuted_single_feature_is_identity():
    rng = np.random.default_rng(0)
    base = TaskDataset("b", rng.normal(size=(5, 1)), np.array([0, 1, 0, 1, 0]), rng.normal(size=(2, 1)),
                       np.array([1, 0]), 2)
    seq = gen_permuted(base, 2)
    assert seq.tasks[1].equals(base)


def test_permuted_twin_model_sees_same_logits():
    base = gen_rotated(1, 20, d=6, seed=1).tasks[0]
    task = gen_permuted(base, 2, seed=2).tasks[1]
    perm = task.meta["permutation"]
    spec = ModelSpec(6, 4, [LayerSpec("a", 6, 5, "full", "relu"), LayerSpec("b", 5, 4, "full", "none")])
    model, twin = init_model(spec, 0), init_model(spec, 0)
    twin.layers[0].W = model.layers[0].W[perm]
    np.testing.assert_allclose(logits(twin, task.x_test), logits(model, base.x_test), atol=1e-12)


def test_dataset_round_trip(tmp_path):
    ds = gen_rotated(1, 25, d=4, C=3, seed=7).tasks[0]
    save_dataset(ds, tmp_path / "t.txt")
    assert load_dataset(tmp_path / "t.txt").equals(ds)


def test_sequence_files(tmp_path):
    paths = save_sequence(gen_rotated(2, 10, d=3, seed=0, holdout=True), tmp_path)
    assert [p.name for p in paths] == ["task_01.txt", "task_02.txt", "holdout.txt"]


def test_parse_error_short_record(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3 2 2 1\n0 1.0 2.0 3.0\n1 1.0 2.0\n0 0.0 0.0 0.0\n")
    with pytest.raises(ParseError, match="line 3"):
        load_dataset(p)


def test_parse_error_count_mismatch(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 2 2 2\n0 1.0 2.0\n1 1.0 2.0\n")
    with pytest.raises(ParseError):
        load_dataset(p)


def test_parse_error_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("two 2 1 1\n")
    with pytest.raises(ParseError, match="line 1"):
        load_dataset(p)


def test_label_out_of_range(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 2 1 1\n0 1.0 2.0\n2 1.0 2.0\n")
    with pytest.raises(DataError, match="line 3"):
        load_dataset(p)
