import warnings

import numpy as np
import pytest

import scpseg.constraints as C
from scpseg.errors import (
    IndexOutOfRange,
    SampleTooLarge,
    SingleLabel,
    UnselectedConstraintPixel,
)


def _lp(pairs):
    return C.LabeledPixels(entries=tuple(pairs))


class TestDeriveConstraints:
    def test_three_pixels_two_labels(self):
        cs = C.derive_constraints(_lp([(0, 0), (1, 0), (2, 1)]))
        assert cs.must == {(0, 1)}
        assert cs.cannot == {(0, 2), (1, 2)}

    def test_single_pixel(self):
        cs = C.derive_constraints(_lp([(0, 0)]))
        assert not cs.must and not cs.cannot

    def test_five_per_class_counts(self):
        lp = _lp([(i, 0) for i in range(5)] + [(i + 10, 1) for i in range(5)])
        cs = C.derive_constraints(lp)
        assert len(cs.must) == 2 * 10  # 2 * C(5, 2)
        assert len(cs.cannot) == 25

    def test_single_label_warns(self):
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            cs = C.derive_constraints(_lp([(0, 0), (1, 0), (2, 0)]))
        assert len(cs.must) == 3 and not cs.cannot
        assert any(issubclass(w.category, SingleLabel) for w in rec)

    def test_budget_subsample(self):
        lp = _lp([(i, i % 2) for i in range(10)])
        full = C.derive_constraints(lp)
        total = len(full.must) + len(full.cannot)
        assert total == 45
        cs = C.derive_constraints(lp, budget=10, seed=3)
        assert len(cs.must) + len(cs.cannot) == 10
        assert cs.must <= full.must and cs.cannot <= full.cannot
        again = C.derive_constraints(lp, budget=10, seed=3)
        assert again.must == cs.must and again.cannot == cs.cannot

    def test_no_pair_in_both_sets(self):
        rng = np.random.default_rng(0)
        lp = _lp([(i, int(rng.integers(0, 3))) for i in range(12)])
        cs = C.derive_constraints(lp)
        assert not (cs.must & cs.cannot)


class TestSelectPixels:
    def test_full_selection_identity(self):
        cs = C.ConstraintSet(must=frozenset(), cannot=frozenset())
        sel = C.select_pixels(8, cs, 8, seed=0)
        assert np.array_equal(sel.p_u, np.arange(8))
        assert np.array_equal(sel.fwd, np.arange(8))

    def test_constrained_pixels_always_included(self):
        cs = C.ConstraintSet(must=frozenset({(3, 9)}), cannot=frozenset())
        sel = C.select_pixels(20, cs, 0, seed=0)
        assert np.array_equal(sel.p_u, [3, 9])
        assert sel.inv(0) == 3 and sel.inv(1) == 9
        assert sel.n_c == 2 and sel.n_s == 0

    def test_seeded_reproducibility(self):
        cs = C.ConstraintSet(must=frozenset(), cannot=frozenset())
        a = C.select_pixels(100, cs, 10, seed=42)
        b = C.select_pixels(100, cs, 10, seed=42)
        assert np.array_equal(a.p_s, b.p_s)
        c = C.select_pixels(100, cs, 10, seed=43)
        assert not np.array_equal(a.p_s, c.p_s)  # overwhelmingly likely

    def test_sample_uniform_without_replacement(self):
        cs = C.ConstraintSet(must=frozenset(), cannot=frozenset())
        sel = C.select_pixels(50, cs, 25, seed=7)
        assert len(np.unique(sel.p_s)) == 25
        assert sel.p_s.min() >= 0 and sel.p_s.max() < 50

    def test_sample_too_large(self):
        cs = C.ConstraintSet(must=frozenset(), cannot=frozenset())
        with pytest.raises(SampleTooLarge):
            C.select_pixels(10, cs, 11, seed=0)

    def test_index_maps_inverse(self):
        cs = C.ConstraintSet(must=frozenset({(2, 5)}), cannot=frozenset({(5, 8)}))
        sel = C.select_pixels(30, cs, 12, seed=1)
        for local in range(sel.n_u):
            assert sel.fwd[sel.inv(local)] == local
        assert set(sel.p_c) <= set(sel.p_u)
        assert sel.n_u <= sel.n_s + sel.n_c


class TestBuildZ:
    def test_single_must_link(self):
        cs = C.ConstraintSet(must=frozenset({(4, 7)}), cannot=frozenset())
        sel = C.make_selection(10, [2], [4, 7])
        z = C.build_z(cs, sel).z
        a, b = sel.fwd[4], sel.fwd[7]
        assert z[a, b] == 1 and z[b, a] == 1
        assert np.count_nonzero(z) == 2

    def test_single_cannot_link(self):
        cs = C.ConstraintSet(must=frozenset(), cannot=frozenset({(1, 2)}))
        sel = C.make_selection(5, [], [1, 2])
        z = C.build_z(cs, sel).z
        assert z[0, 1] == -1 and z[1, 0] == -1

    def test_exhaustive_membership(self):
        lp = _lp([(0, 0), (3, 0), (7, 1), (9, 2)])
        cs = C.derive_constraints(lp)
        sel = C.select_pixels(12, cs, 4, seed=5)
        z = C.build_z(cs, sel).z
        for i in range(sel.n_u):
            for j in range(sel.n_u):
                pair = (min(sel.inv(i), sel.inv(j)), max(sel.inv(i), sel.inv(j)))
                if i == j:
                    expected = 0.0
                elif pair in cs.must:
                    expected = 1.0
                elif pair in cs.cannot:
                    expected = -1.0
                else:
                    expected = 0.0
                assert z[i, j] == expected

    def test_symmetry_and_counts(self):
        lp = _lp([(i, i % 2) for i in range(8)])
        cs = C.derive_constraints(lp)
        sel = C.select_pixels(40, cs, 6, seed=2)
        z = C.build_z(cs, sel).z
        assert np.array_equal(z, z.T)
        assert np.all(np.diag(z) == 0)
        assert (z == 1).sum() == 2 * len(cs.must)
        assert (z == -1).sum() == 2 * len(cs.cannot)

    def test_unselected_pixel_rejected(self):
        cs = C.ConstraintSet(must=frozenset({(0, 5)}), cannot=frozenset())
        sel = C.make_selection(10, [1, 2], [0])  # 5 missing
        with pytest.raises(UnselectedConstraintPixel):
            C.build_z(cs, sel)


class TestScribbleIO:
    def test_labeled_form(self, tmp_path):
        doc = {
            "image": "x.png",
            "labeled": [
                {"x": 1, "y": 0, "label": "object"},
                {"x": 0, "y": 1, "label": "background"},
            ],
        }
        path = tmp_path / "s.json"
        import json

        path.write_text(json.dumps(doc))
        lp, cs, names = C.load_scribbles(path, 4, 4)
        assert cs is None
        assert names == ["background", "object"]
        assert dict(lp.entries) == {1: 1, 4: 0}

    def test_pairs_form(self, tmp_path):
        import json

        path = tmp_path / "p.json"
        path.write_text(json.dumps({"must": [[0, 3]], "cannot": [[2, 1]]}))
        lp, cs, _ = C.load_scribbles(path, 2, 2)
        assert lp is None
        assert cs.must == {(0, 3)} and cs.cannot == {(1, 2)}

    def test_out_of_range_scribble(self, tmp_path):
        import json

        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"labeled": [{"x": 5, "y": 0, "label": "a"}]}))
        with pytest.raises(IndexOutOfRange):
            C.load_scribbles(path, 4, 4)


class TestScribbleConflicts:
    def test_conflicting_labels_rejected(self):
        doc = {
            "labeled": [
                {"x": 1, "y": 1, "label": "a"},
                {"x": 1, "y": 1, "label": "b"},
            ]
        }
        with pytest.raises(ValueError):
            C.parse_scribbles(doc, 4, 4)

    def test_duplicate_same_label_deduplicated(self):
        doc = {
            "labeled": [
                {"x": 1, "y": 1, "label": "a"},
                {"x": 1, "y": 1, "label": "a"},
                {"x": 2, "y": 1, "label": "b"},
            ]
        }
        lp, _, names = C.parse_scribbles(doc, 4, 4)
        assert len(lp) == 2 and names == ["a", "b"]

    def test_budget_larger_than_pool_keeps_everything(self):
        lp = C.LabeledPixels(entries=((0, 0), (1, 0), (2, 1)))
        full = C.derive_constraints(lp)
        capped = C.derive_constraints(lp, budget=100, seed=0)
        assert capped.must == full.must and capped.cannot == full.cannot
