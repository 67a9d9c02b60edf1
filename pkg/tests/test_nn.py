import numpy as np
import pytest

from conftest import make_window
from tinyfit.errors import (
    BadClassCount,
    BadInput,
    BadLabel,
    EmptyDataset,
    InsufficientExamples,
)
from tinyfit.nn import (
    HEAD_KEYS,
    PARAM_KEYS,
    ArchSpec,
    TrainConfig,
    evaluate,
    flatten_grads,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grads,
    param_count,
    personalize,
    save_checkpoint,
    train,
)
from tinyfit.signal import Window

SMALL_ARCH = ArchSpec(
    input_len=14, in_channels=2, kernel=3, conv1_out=3, conv2_out=4, pool=2,
    dense_units=5,
)

# frozen snapshot of this implementation's own double-precision forward
GOLDEN_SEED = 123
GOLDEN_INPUT_SEED = 456
GOLDEN_PROBS = [
    0.026326280306367657,
    0.23079220865674846,
    0.07674664188844693,
    0.02240656549077593,
    0.643728303657661,
]


def small_model(n_classes=3, seed=0):
    return init_model([f"c{i}" for i in range(n_classes)], seed=seed, arch=SMALL_ARCH)


def finite_difference_grads(model, x, y, h=1e-4):
    theta0 = np.concatenate([model.params[k].ravel() for k in PARAM_KEYS])

    def loss_at(theta):
        off = 0
        for k in PARAM_KEYS:
            size = model.params[k].size
            model.params[k] = theta[off : off + size].reshape(model.params[k].shape)
            off += size
        loss, _ = loss_and_grads(model, x, y)
        return loss

    grads = np.zeros_like(theta0)
    for i in range(theta0.size):
        plus = theta0.copy()
        plus[i] += h
        minus = theta0.copy()
        minus[i] -= h
        grads[i] = (loss_at(plus) - loss_at(minus)) / (2 * h)
    loss_at(theta0)  # restore
    return grads


class TestInit:
    @pytest.mark.parametrize("n_classes,expected", [(18, 7674), (7, 7311), (12, 7476)])
    def test_parameter_count_law(self, n_classes, expected):
        assert param_count(ArchSpec(), n_classes) == expected
        model = init_model([f"c{i}" for i in range(n_classes)], seed=0)
        assert sum(p.size for p in model.params.values()) == expected

    def test_deterministic(self):
        a = init_model(["x", "y", "z"], seed=5)
        b = init_model(["x", "y", "z"], seed=5)
        for k in PARAM_KEYS:
            assert np.array_equal(a.params[k], b.params[k])

    def test_biases_zero(self):
        m = init_model(["x", "y"], seed=1)
        for k in PARAM_KEYS:
            if k.endswith("_b"):
                assert np.all(m.params[k] == 0.0)

    def test_too_few_classes(self):
        with pytest.raises(BadClassCount):
            init_model(["only"], seed=0)


class TestForward:
    def test_probabilities(self):
        m = init_model(["a", "b", "c"], seed=2)
        p = forward(m, np.random.default_rng(0).normal(size=(60, 6)))
        assert p.shape == (3,)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) < 1e-6

    def test_zero_model_uniform(self):
        m = init_model(["a", "b", "c", "d"], seed=0)
        for k in PARAM_KEYS:
            m.params[k] = np.zeros_like(m.params[k])
        p = forward(m, np.random.default_rng(1).normal(size=(60, 6)))
        assert p == pytest.approx(np.full(4, 0.25))

    def test_head_bias_shift_invariance(self):
        m = init_model(["a", "b", "c"], seed=3)
        x = np.random.default_rng(2).normal(size=(60, 6))
        base = forward(m, x).argmax()
        m.params["head_b"] = m.params["head_b"] + 13.7
        assert forward(m, x).argmax() == base

    def test_golden_vector(self):
        m = init_model(["a", "b", "c", "d", "e"], seed=GOLDEN_SEED)
        x = np.random.default_rng(GOLDEN_INPUT_SEED).normal(size=(60, 6))
        assert forward(m, x) == pytest.approx(GOLDEN_PROBS, abs=1e-6)

    def test_bad_shape(self):
        m = init_model(["a", "b"], seed=0)
        with pytest.raises(BadInput):
            forward(m, np.zeros((59, 6)))


class TestLossAndGrads:
    def test_uniform_model_ln_c(self):
        for c in (2, 5, 9):
            m = small_model(n_classes=c)
            for k in PARAM_KEYS:
                m.params[k] = np.zeros_like(m.params[k])
            x = np.random.default_rng(0).normal(size=(4, 14, 2))
            loss, _ = loss_and_grads(m, x, np.zeros(4, dtype=int))
            assert loss == pytest.approx(np.log(c), abs=1e-9)

    def test_perfect_prediction_loss_near_zero(self):
        m = small_model()
        m.params["head_b"] = np.array([50.0, 0.0, 0.0])
        x = np.zeros((2, 14, 2))
        loss, _ = loss_and_grads(m, x, np.zeros(2, dtype=int))
        assert loss <= 1e-6

    def test_bad_label(self):
        m = small_model()
        with pytest.raises(BadLabel):
            loss_and_grads(m, np.zeros((1, 14, 2)), np.array([3]))

    def test_frozen_params_zero_grad(self):
        m = small_model()
        m.trainable = {k: k in HEAD_KEYS for k in PARAM_KEYS}
        x = np.random.default_rng(1).normal(size=(4, 14, 2))
        _, grads = loss_and_grads(m, x, np.array([0, 1, 2, 0]))
        for k in PARAM_KEYS:
            if k in HEAD_KEYS:
                assert np.any(grads[k] != 0.0)
            else:
                assert np.all(grads[k] == 0.0)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(10)
        m = small_model(n_classes=3, seed=11)
        x = rng.normal(size=(4, 14, 2))
        y = rng.integers(0, 3, size=4)
        _, grads = loss_and_grads(m, x, y)
        analytic = flatten_grads(grads)
        numeric = finite_difference_grads(m, x, y)
        rel = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3
        )
        assert rel.max() < 1e-4


class TestTrain:
    @staticmethod
    def _separable_windows(n_per_class=70, seed=0):
        # three classes with disjoint per-channel mean signatures
        rng = np.random.default_rng(seed)
        wins = []
        means = [np.array([2, 0, 0, -2, 0, 0]), np.array([0, 2, -2, 0, 0, 0]),
                 np.array([0, 0, 0, 0, 2, -2])]
        for ci, mu in enumerate(means):
            for _ in range(n_per_class):
                data = rng.normal(size=(60, 6)) * 0.5 + mu
                wins.append(Window(data=data, subject_id="s0", label=f"c{ci}"))
        return wins

    def test_learns_separable_classes(self):
        wins = self._separable_windows()
        model = init_model(["c0", "c1", "c2"], seed=1)
        model, history = train(model, wins, TrainConfig(epochs=30, seed=7))
        assert history.accuracy[-1] >= 0.95

    def test_epochs_zero_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_deterministic(self):
        wins = self._separable_windows(n_per_class=20)
        cfg = TrainConfig(epochs=3, seed=5)
        a, _ = train(init_model(["c0", "c1", "c2"], seed=1), wins, cfg)
        b, _ = train(init_model(["c0", "c1", "c2"], seed=1), wins, cfg)
        for k in PARAM_KEYS:
            assert np.array_equal(a.params[k], b.params[k])

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train(init_model(["a", "b"], seed=0), [], TrainConfig(epochs=1))

    def test_validation_keeps_best_epoch(self):
        wins = self._separable_windows(n_per_class=30)
        model = init_model(["c0", "c1", "c2"], seed=1)
        tuned, history = train(
            model, wins, TrainConfig(epochs=5, seed=7, val_fraction=0.25)
        )
        assert len(history.val_accuracy) == 5
        # retained parameters reproduce the best recorded validation accuracy
        assert max(history.val_accuracy) == history.val_accuracy[
            int(np.argmax(history.val_accuracy))
        ]


class TestPersonalize:
    @staticmethod
    def _user_windows(classes, n_per_class=20, seed=3):
        rng = np.random.default_rng(seed)
        wins = []
        for ci, cname in enumerate(classes):
            mu = np.zeros(6)
            mu[ci % 6] = 2.5
            for _ in range(n_per_class):
                wins.append(
                    Window(
                        data=rng.normal(size=(60, 6)) * 0.5 + mu,
                        subject_id="u",
                        label=cname,
                    )
                )
        return wins

    def test_105_example_finetune_set(self):
        classes = [f"c{i}" for i in range(7)]
        wins = self._user_windows(classes, n_per_class=15)
        from tinyfit.nn.training import sample_per_class

        sample, rest = sample_per_class(wins, 15, seed=0)
        assert len(sample) == 105
        assert len(rest) == 0

    def test_freeze_invariant_bit_equality(self):
        classes = ["a", "b", "c"]
        pretrained = init_model(classes, seed=4)
        wins = self._user_windows(classes)
        tuned = personalize(pretrained, wins, config=TrainConfig(epochs=3, seed=1))
        for k in PARAM_KEYS:
            if k in HEAD_KEYS:
                assert not np.array_equal(tuned.params[k], pretrained.params[k])
            else:
                assert np.array_equal(tuned.params[k], pretrained.params[k])

    def test_head_replaced_on_new_class_map(self):
        pretrained = init_model(["a", "b", "c"], seed=4)
        new_classes = ["p", "q", "r", "s"]
        wins = self._user_windows(new_classes)
        tuned = personalize(pretrained, wins, config=TrainConfig(epochs=2, seed=1))
        assert tuned.class_map == tuple(sorted(new_classes))
        assert tuned.params["head_w"].shape == (32, 4)
        for k in PARAM_KEYS:
            if k not in HEAD_KEYS:
                assert np.array_equal(tuned.params[k], pretrained.params[k])

    def test_insufficient_examples_names_class(self):
        classes = ["a", "b"]
        wins = self._user_windows(classes, n_per_class=15)
        wins = [w for w in wins if w.label != "b"] + [
            w for w in wins if w.label == "b"
        ][:14]
        with pytest.raises(InsufficientExamples) as exc:
            personalize(init_model(classes, seed=0), wins)
        assert exc.value.class_name == "b"
        assert exc.value.have == 14

    def test_own_data_sanity(self):
        # personalizing on the training distribution must not hurt much
        classes = ["a", "b", "c"]
        wins = self._user_windows(classes, n_per_class=40, seed=8)
        model = init_model(classes, seed=4)
        model, _ = train(model, wins, TrainConfig(epochs=15, seed=7))
        before, _ = evaluate(model, wins)
        tuned = personalize(model, wins, config=TrainConfig(epochs=20, seed=1))
        after, _ = evaluate(tuned, wins)
        assert after >= before - 0.05


class TestEvaluate:
    def test_self_labels_give_full_accuracy(self):
        m = init_model(["a", "b", "c"], seed=6)
        rng = np.random.default_rng(0)
        wins = []
        for _ in range(30):
            data = rng.normal(size=(60, 6))
            pred = int(forward(m, data).argmax())
            wins.append(Window(data=data, subject_id="s", label=m.class_map[pred]))
        accuracy, confusion = evaluate(m, wins)
        assert accuracy == 1.0
        assert confusion.sum() == 30
        assert np.all(confusion == np.diag(np.diag(confusion)))

    def test_confusion_row_sums_are_support(self):
        m = init_model(["a", "b"], seed=6)
        rng = np.random.default_rng(1)
        wins = [
            Window(data=rng.normal(size=(60, 6)), subject_id="s",
                   label="a" if i % 3 else "b")
            for i in range(30)
        ]
        _, confusion = evaluate(m, wins)
        support = {"a": 20, "b": 10}
        for ci, cname in enumerate(m.class_map):
            assert confusion[ci].sum() == support[cname]

    def test_random_model_near_chance(self):
        c = 4
        m = init_model([f"c{i}" for i in range(c)], seed=9)
        rng = np.random.default_rng(2)
        n_per = 100
        wins = [
            Window(data=rng.normal(size=(60, 6)), subject_id="s", label=f"c{i % c}")
            for i in range(c * n_per)
        ]
        accuracy, _ = evaluate(m, wins)
        n = c * n_per
        sigma = np.sqrt((1 / c) * (1 - 1 / c) / n)
        assert abs(accuracy - 1 / c) <= 3 * sigma + 1e-9

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            evaluate(init_model(["a", "b"], seed=0), [])


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = init_model(["walk", "run", "sit"], seed=12)
        path = tmp_path / "m.tflt"
        save_checkpoint(path, m)
        back = load_checkpoint(path)
        assert back.class_map == m.class_map
        for k in PARAM_KEYS:
            assert np.array_equal(
                back.params[k], m.params[k].astype(np.float32).astype(np.float64)
            )

    def test_truncated(self, tmp_path):
        from tinyfit.errors import Truncated

        m = init_model(["a", "b"], seed=0)
        path = tmp_path / "m.tflt"
        save_checkpoint(path, m)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(Truncated):
            load_checkpoint(path)
