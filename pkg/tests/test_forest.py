"""Forest training, out-of-bag prediction, and permutation importance."""

import random

import numpy as np
import pytest

from generators import (
    make_dictionary,
    make_records,
    oracle_best_partition,
    planted_mda_records,
)
from rulekit.errors import ValidationError
from rulekit.forest import (
    ForestConfig,
    best_partition,
    export_importance_csv,
    export_importance_json,
    mda_importance,
    oob_predict,
    select_top_k,
    train,
)


class TestForestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": 0},
            {"mtry": 0},
            {"min_node_size": 0},
            {"max_depth": 0},
        ],
    )
    def test_bounds(self, kwargs):
        with pytest.raises(ValidationError):
            ForestConfig(**kwargs)

    def test_defaults(self):
        cfg = ForestConfig()
        assert cfg.n_trees == 500
        assert cfg.mtry is None
        assert cfg.min_node_size == 1
        assert cfg.max_depth is None


class TestBestPartition:
    def test_matches_exhaustive_oracle(self):
        rng = random.Random(20260815)
        for _ in range(300):
            n_cats = rng.randint(2, 5)
            n_classes = rng.randint(2, 3)
            counts = [
                [rng.randint(0, 6) for _ in range(n_classes)] for _ in range(n_cats)
            ]
            min_node = rng.choice((1, 1, 2))
            got = best_partition(np.array(counts), min_node)
            want = oracle_best_partition(counts, min_node)
            if want is None:
                assert got is None
                continue
            assert got is not None
            assert got[0] == pytest.approx(want[0], abs=1e-12)
            # the returned subset must itself achieve the optimal decrease
            left = got[1]
            n_classes_ = len(counts[0])
            present = [i for i, row in enumerate(counts) if sum(row) > 0]
            totals = [sum(counts[i][k] for i in present) for k in range(n_classes_)]
            n_t = sum(totals)
            parent = 1.0 - sum(t * t for t in totals) / (n_t * n_t)
            lcounts = [sum(counts[i][k] for i in left) for k in range(n_classes_)]
            nl = sum(lcounts)
            nr = n_t - nl
            rcounts = [t - l for t, l in zip(totals, lcounts)]
            child = (
                nl - sum(v * v for v in lcounts) / nl
                + nr - sum(v * v for v in rcounts) / nr
            ) / n_t
            assert parent - child == pytest.approx(want[0], abs=1e-12)

    def test_pure_node_has_no_split(self):
        assert best_partition(np.array([[5, 0], [3, 0]])) is None

    def test_single_present_category(self):
        assert best_partition(np.array([[2, 3], [0, 0]])) is None

    def test_min_node_size_filters_partitions(self):
        counts = np.array([[1, 0], [0, 9]])
        assert best_partition(counts, min_node_size=1) is not None
        assert best_partition(counts, min_node_size=2) is None

    def test_greedy_path_beyond_exhaustive_bound(self):
        # 14 categories forces the greedy search; a clean two-block signal
        # must still be found
        rng = random.Random(4)
        counts = []
        for i in range(14):
            if i < 7:
                counts.append([rng.randint(8, 12), rng.randint(0, 1)])
            else:
                counts.append([rng.randint(0, 1), rng.randint(8, 12)])
        found = best_partition(np.array(counts))
        assert found is not None
        dec, left = found
        assert left == frozenset(range(7)) or left == frozenset(range(7, 14))
        assert dec > 0.3


@pytest.fixture
def separable_rs():
    d = make_dictionary({"flag": ("on", "off"), "label": ("yes", "no")})
    rows = [
        {"flag": "on" if i % 2 else "off", "label": "yes" if i % 2 else "no"}
        for i in range(20)
    ]
    return make_records(d, rows)


class TestTrain:
    def test_single_tree_splits_on_perfect_predictor(self, separable_rs):
        f = train(separable_rs, "label", ["flag"], ForestConfig(n_trees=1, seed=0))
        root = f.trees[0].nodes[0]
        assert root.feature == 0
        assert len(f.trees[0].oob_indices) > 0
        assert oob_predict(f, separable_rs).accuracy == 1.0

    def test_response_cannot_be_feature(self, separable_rs):
        with pytest.raises(ValidationError):
            train(separable_rs, "label", ["label"], ForestConfig(n_trees=1))

    def test_empty_features(self, separable_rs):
        with pytest.raises(ValidationError):
            train(separable_rs, "label", [], ForestConfig(n_trees=1))

    def test_single_class_response(self):
        d = make_dictionary({"a": ("x", "y"), "resp": ("p", "q")})
        rs = make_records(d, [{"a": "x", "resp": "p"}, {"a": "y", "resp": "p"}])
        with pytest.raises(ValidationError, match="single value"):
            train(rs, "resp", ["a"], ForestConfig(n_trees=1))

    def test_mtry_out_of_range(self, separable_rs):
        with pytest.raises(ValidationError, match="mtry"):
            train(separable_rs, "label", ["flag"], ForestConfig(n_trees=1, mtry=2))

    def test_eighteen_features_report_lists_all(self):
        rng = random.Random(8)
        spec = {f"f{i:02d}": ("a", "b", "c") for i in range(18)}
        spec["light"] = ("day", "dusk", "dark")
        d = make_dictionary(spec)
        rows = [
            {**{f"f{i:02d}": rng.choice("abc") for i in range(18)},
             "light": rng.choice(("day", "dusk", "dark"))}
            for _ in range(150)
        ]
        rs = make_records(d, rows)
        features = [f"f{i:02d}" for i in range(18)]
        f = train(rs, "light", features, ForestConfig(n_trees=30, seed=2))
        assert f.mtry == 4  # floor(sqrt(18))
        report = mda_importance(f, rs, seed=2)
        assert sorted(e.variable for e in report.entries) == features

    def test_node_children_respect_min_node_size(self, separable_rs):
        f = train(
            separable_rs, "label", ["flag"],
            ForestConfig(n_trees=20, seed=3, min_node_size=4),
        )
        for tree in f.trees:
            for node in tree.nodes:
                if node.is_leaf:
                    pure = sum(1 for c in node.class_counts if c) <= 1
                    assert pure or sum(node.class_counts) >= 4

    def test_determinism_across_threads_and_runs(self, separable_rs):
        cfg = ForestConfig(n_trees=16, seed=42)
        a = train(separable_rs, "label", ["flag"], cfg, threads=1)
        b = train(separable_rs, "label", ["flag"], cfg, threads=4)
        for ta, tb in zip(a.trees, b.trees):
            assert ta.nodes == tb.nodes
            assert np.array_equal(ta.oob_indices, tb.oob_indices)
        ra = mda_importance(a, separable_rs, seed=9, threads=4)
        rb = mda_importance(b, separable_rs, seed=9, threads=1)
        assert ra == rb

    def test_different_seeds_differ(self, separable_rs):
        a = train(separable_rs, "label", ["flag"], ForestConfig(n_trees=8, seed=1))
        b = train(separable_rs, "label", ["flag"], ForestConfig(n_trees=8, seed=2))
        assert any(
            not np.array_equal(ta.in_bag, tb.in_bag)
            for ta, tb in zip(a.trees, b.trees)
        )


class TestOobPredict:
    def test_single_tree_covers_exactly_the_oob_records(self, separable_rs):
        f = train(separable_rs, "label", ["flag"], ForestConfig(n_trees=1, seed=0))
        prediction = oob_predict(f, separable_rs)
        oob = set(f.trees[0].oob_indices.tolist())
        for i, label in enumerate(prediction.predictions):
            assert (label is not None) == (i in oob)

    def test_record_set_mismatch(self, separable_rs):
        f = train(separable_rs, "label", ["flag"], ForestConfig(n_trees=1, seed=0))
        shorter = make_records(
            separable_rs.dictionary,
            [{"flag": "on", "label": "yes"}, {"flag": "off", "label": "no"}],
        )
        with pytest.raises(ValidationError, match="does not match"):
            oob_predict(f, shorter)

    def test_high_coverage_with_many_trees(self):
        rng = random.Random(41)
        d = make_dictionary(
            {"signal": ("g0", "g1"), "noise": ("u", "v"), "outcome": ("pos", "neg")}
        )
        rows = []
        for _ in range(200):
            g = rng.choice(("g0", "g1"))
            rows.append({
                "signal": g,
                "noise": rng.choice(("u", "v")),
                "outcome": "pos" if rng.random() < (0.9 if g == "g0" else 0.1) else "neg",
            })
        rs = make_records(d, rows)
        f = train(rs, "outcome", ["signal", "noise"], ForestConfig(n_trees=100, seed=5))
        prediction = oob_predict(f, rs)
        # P(a record is in-bag for all 100 trees) = (1 - (1-1/n)^n)^100, tiny
        assert prediction.coverage >= 0.99

    def test_accuracy_close_to_plug_in_optimum(self):
        rng = random.Random(41)
        d = make_dictionary(
            {"signal": ("g0", "g1"), "n1": ("u", "v"), "n2": ("p", "q"),
             "outcome": ("pos", "neg")}
        )
        rows = []
        for _ in range(200):
            g = rng.choice(("g0", "g1"))
            rows.append({
                "signal": g,
                "n1": rng.choice(("u", "v")),
                "n2": rng.choice(("p", "q")),
                "outcome": "pos" if rng.random() < (0.9 if g == "g0" else 0.1) else "neg",
            })
        rs = make_records(d, rows)
        from collections import Counter

        by_signal: dict[str, Counter] = {}
        for row in rows:
            by_signal.setdefault(row["signal"], Counter())[row["outcome"]] += 1
        optimum = sum(c.most_common(1)[0][1] for c in by_signal.values()) / len(rows)
        f = train(rs, "outcome", ["signal", "n1", "n2"], ForestConfig(n_trees=100, seed=5))
        accuracy = oob_predict(f, rs).accuracy
        assert abs(accuracy - optimum) <= 0.05


class TestMdaImportance:
    def test_unused_features_score_exactly_zero(self):
        rs, predictor, noise = planted_mda_records(n=300)
        f = train(rs, "resp", [predictor] + noise,
                  ForestConfig(n_trees=1, max_depth=1, mtry=6, seed=1))
        assert f.trees[0].nodes[0].feature == 0  # stump splits on the predictor
        report = mda_importance(f, rs, seed=1)
        by_var = {e.variable: e for e in report.entries}
        assert by_var[predictor].mda > 0.0
        for name in noise:
            assert by_var[name].mda == 0.0
            assert by_var[name].sd == 0.0

    def test_planted_predictor_ranks_first(self):
        rs, predictor, noise = planted_mda_records(n=300)
        f = train(rs, "resp", [predictor] + noise, ForestConfig(n_trees=80, seed=6))
        report = mda_importance(f, rs, seed=6)
        assert report.entries[0].variable == predictor
        assert report.entries[0].mda > 0.2
        assert report.oob_accuracy > 0.95

    def test_ties_order_by_dictionary_position(self):
        rs, predictor, noise = planted_mda_records(n=200)
        f = train(rs, "resp", [predictor] + noise,
                  ForestConfig(n_trees=1, max_depth=1, mtry=6, seed=1))
        report = mda_importance(f, rs, seed=1)
        zero_vars = [e.variable for e in report.entries if e.mda == 0.0]
        positions = [f.dictionary.variable_index(v) for v in zero_vars]
        assert positions == sorted(positions)


def test_select_top_k_bounds():
    rs, predictor, noise = planted_mda_records(n=200)
    f = train(rs, "resp", [predictor] + noise, ForestConfig(n_trees=10, seed=0))
    report = mda_importance(f, rs, seed=0)
    assert select_top_k(report, 1) == (predictor,)
    assert len(select_top_k(report, 6)) == 6
    with pytest.raises(ValidationError):
        select_top_k(report, 0)
    with pytest.raises(ValidationError):
        select_top_k(report, 7)


def test_importance_exports(tmp_path):
    rs, predictor, noise = planted_mda_records(n=200)
    f = train(rs, "resp", [predictor] + noise, ForestConfig(n_trees=10, seed=0))
    report = mda_importance(f, rs, seed=0)
    csv_path = export_importance_csv(report, tmp_path / "imp.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "variable,mda,sd,rank"
    assert len(lines) == 7
    first = lines[1].split(",")
    assert first[0] == predictor
    assert float(first[1]) == report.entries[0].mda  # repr round-trips exactly

    import json

    doc = json.loads(export_importance_json(report, tmp_path / "imp.json").read_text())
    assert doc["entries"][0]["variable"] == predictor
    assert doc["entries"][0]["rank"] == 1
    assert doc["oob_accuracy"] == report.oob_accuracy
