import numpy as np
import pytest

from hierfusion.synth import (
    SynthSpec,
    generate,
    noise_fraction,
    plant_means,
    read_groundtruth,
    split_by_leaf_counts,
    write_groundtruth,
)


def spec_for(tree, **kw):
    defaults = dict(hierarchy=tree, dim_object=6, dim_scene=6,
                    source_per_leaf=10, target_per_leaf=10, seed=0)
    defaults.update(kw)
    return SynthSpec(**defaults)


class TestPlantMeans:
    def test_root_at_origin(self, three_layer_tree, rng):
        means = plant_means(three_layer_tree, 5, 2.0, 0.5, rng)
        assert np.all(means["ROOT"] == 0)
        assert set(means) == set(three_layer_tree.nodes)

    def test_offsets_shrink_with_depth(self, three_layer_tree):
        # average over many dims: layer-1 offsets ~ scale, layer-3 ~ scale * decay^2
        rng = np.random.default_rng(0)
        means = plant_means(three_layer_tree, 400, 2.0, 0.5, rng)
        top = np.linalg.norm(means["food"] - means["ROOT"]) / np.sqrt(400)
        deep = np.linalg.norm(means["pizza"] - means["restaurant"]) / np.sqrt(400)
        assert top == pytest.approx(2.0, rel=0.2)
        assert deep == pytest.approx(0.5, rel=0.2)

    def test_siblings_share_their_parent_component(self, three_layer_tree):
        rng = np.random.default_rng(1)
        means = plant_means(three_layer_tree, 200, 2.0, 0.3, rng)
        # siblings differ only by small layer-3 offsets
        sib = np.linalg.norm(means["pizza"] - means["sushi"])
        cross = np.linalg.norm(means["pizza"] - means["bar"])
        assert sib < cross


class TestGenerate:
    def test_deterministic_by_seed(self, tiny_tree):
        a_src, a_tgt, a_truth = generate(spec_for(tiny_tree, noise_rate=0.3))
        b_src, b_tgt, b_truth = generate(spec_for(tiny_tree, noise_rate=0.3))
        assert a_truth == b_truth
        for s, t in zip(a_src + a_tgt, b_src + b_tgt):
            assert s.sample_id == t.sample_id
            assert s.label == t.label
            assert np.array_equal(s.object_feat, t.object_feat)

    def test_sample_counts_and_platforms(self, tiny_tree):
        source, target, truth = generate(spec_for(tiny_tree))
        assert len(source) == 40 and len(target) == 40
        assert {s.platform for s in source} == {"platform_a"}
        assert {s.platform for s in target} == {"platform_b"}
        assert len(truth) == 80

    def test_clean_data_has_no_noise(self, tiny_tree):
        source, target, truth = generate(spec_for(tiny_tree, noise_rate=0.0))
        assert noise_fraction(source, truth) == 0.0
        assert noise_fraction(target, truth) == 0.0

    def test_noise_rate_lands_near_nominal(self, tiny_tree):
        spec = spec_for(tiny_tree, target_per_leaf=250, noise_rate=0.4, seed=2)
        _, target, truth = generate(spec)
        measured = noise_fraction(target, truth)
        assert 0.3 < measured < 0.5

    def test_source_always_clean(self, tiny_tree):
        spec = spec_for(tiny_tree, noise_rate=0.4)
        source, _, truth = generate(spec)
        assert all(truth[s.sample_id] == s.label for s in source)

    def test_flipped_labels_stay_in_leaf_set(self, tiny_tree):
        spec = spec_for(tiny_tree, target_per_leaf=100, noise_rate=0.5, seed=4)
        _, target, truth = generate(spec)
        leaves = set(tiny_tree.leaves)
        for s in target:
            assert s.label in leaves
            if s.label != truth[s.sample_id]:
                assert truth[s.sample_id] in leaves

    def test_domain_shift_moves_target(self, tiny_tree):
        clean = spec_for(tiny_tree, seed=6)
        shifted = spec_for(tiny_tree, seed=6, domain_shift=5.0)
        _, t0, _ = generate(clean)
        _, t1, _ = generate(shifted)
        gap = np.linalg.norm(t1[0].object_feat - t0[0].object_feat)
        assert gap == pytest.approx(5.0, rel=1e-6)

    def test_informativeness_zero_kills_the_view(self, tiny_tree):
        spec = spec_for(tiny_tree, object_informativeness=0.0, seed=8,
                        source_per_leaf=50)
        source, _, _ = generate(spec)
        by_label = {}
        for s in source:
            by_label.setdefault(s.label, []).append(s.object_feat)
        centroids = np.stack([np.mean(v, axis=0) for v in by_label.values()])
        # all centroids collapse near the origin when the view carries no signal
        assert np.abs(centroids).max() < 1.0

    def test_misspecified_changes_leaf_assignment(self, tiny_tree):
        a = generate(spec_for(tiny_tree, seed=9))[0]
        b = generate(spec_for(tiny_tree, seed=9, misspecified=True))[0]
        diffs = [
            np.linalg.norm(x.object_feat - y.object_feat) for x, y in zip(a, b)
        ]
        assert max(diffs) > 1.0

    def test_validation(self, tiny_tree):
        with pytest.raises(ValueError):
            spec_for(tiny_tree, noise_rate=1.0)
        with pytest.raises(ValueError):
            spec_for(tiny_tree, dim_object=0)
        with pytest.raises(ValueError):
            spec_for(tiny_tree, object_informativeness=2.0)


class TestSplitByLeafCounts:
    def test_counts_honored(self, tiny_tree):
        source, _, _ = generate(spec_for(tiny_tree, source_per_leaf=10))
        counts = {"pizza": 3, "sushi": 7, "bar": 10, "club": 0}
        train, test = split_by_leaf_counts(source, counts, seed=0)
        train_by = {}
        for s in train:
            train_by[s.label] = train_by.get(s.label, 0) + 1
        assert train_by == {"pizza": 3, "sushi": 7, "bar": 10}
        assert len(train) + len(test) == len(source)

    def test_overdraw_rejected(self, tiny_tree):
        source, _, _ = generate(spec_for(tiny_tree, source_per_leaf=5))
        with pytest.raises(ValueError, match="need"):
            split_by_leaf_counts(source, {"pizza": 6}, seed=0)

    def test_deterministic(self, tiny_tree):
        source, _, _ = generate(spec_for(tiny_tree))
        a, _ = split_by_leaf_counts(source, {"pizza": 5}, seed=3)
        b, _ = split_by_leaf_counts(source, {"pizza": 5}, seed=3)
        assert [s.sample_id for s in a] == [s.sample_id for s in b]


class TestGroundtruth:
    def test_round_trip(self, tmp_path, tiny_tree):
        _, _, truth = generate(spec_for(tiny_tree, noise_rate=0.2))
        path = tmp_path / "gt.jsonl"
        write_groundtruth(path, truth)
        assert read_groundtruth(path) == truth

    def test_sorted_by_id(self, tmp_path):
        path = tmp_path / "gt.jsonl"
        write_groundtruth(path, {"z": "a", "a": "b"})
        lines = path.read_text().splitlines()
        assert lines[0].startswith('{"id": "a"')
