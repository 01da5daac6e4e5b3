import itertools

import numpy as np
import pytest

import scpseg.graph as G
import scpseg.ncut as N
from scpseg.constraints import ConstraintSet


def _cfg(**kw):
    return N.SpectralConfig(**{"seed": 0, **kw})


def _random_symmetric(n, density, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n))
    a = 0.5 * (a + a.T)
    a[a < 1.0 - density] = 0.0
    np.fill_diagonal(a, 0.0)
    return a


def _two_cliques(eps_edge=0.01):
    a = np.zeros((8, 8))
    a[:4, :4] = 1.0
    a[4:, 4:] = 1.0
    np.fill_diagonal(a, 0.0)
    a[3, 4] = a[4, 3] = eps_edge
    return G.from_dense(a)


def _brute_force_best_ncut(w):
    n = w.n
    best = np.inf
    for bits in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + bits)
        if labels.max() == labels.min():
            continue
        best = min(best, N.ncut_value_from_labels(w, labels))
    return best


class TestTopEigenvectors:
    def test_two_node_analytic(self):
        w = G.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
        values, vectors = N.top_eigenvectors(w, 2, _cfg())
        assert np.allclose(values, [1.0, -1.0], atol=1e-12)
        assert np.allclose(np.abs(vectors[:, 0]), [2**-0.5] * 2, atol=1e-10)

    def test_disconnected_multiplicity(self):
        rng = np.random.default_rng(1)
        a = np.zeros((12, 12))
        for b in range(3):
            blk = rng.random((4, 4))
            blk = 0.5 * (blk + blk.T)
            np.fill_diagonal(blk, 0.0)
            a[4 * b : 4 * b + 4, 4 * b : 4 * b + 4] = blk
        values, _ = N.top_eigenvectors(G.from_dense(a), 4, _cfg())
        assert np.allclose(values[:3], 1.0, atol=1e-8)
        assert values[3] < 1.0 - 1e-6

    def test_matches_dense_oracle(self):
        for seed in range(5):
            w = G.from_dense(_random_symmetric(30, 0.4, seed))
            ops = G.normalize(w)
            dense_vals, dense_vecs = np.linalg.eigh(ops.s_u.to_dense())
            values, vectors = N.top_eigenvectors(w, 5, _cfg(seed=seed))
            assert np.abs(values - dense_vals[::-1][:5]).max() < 1e-8
            # principal angles between the two 5-dim subspaces
            q1, _ = np.linalg.qr(vectors)
            q2, _ = np.linalg.qr(dense_vecs[:, ::-1][:, :5])
            sv = np.linalg.svd(q1.T @ q2, compute_uv=False)
            angles = np.arccos(np.clip(sv, -1, 1))
            assert angles.max() < 1e-6

    def test_residuals_and_range(self):
        w = G.from_dense(_random_symmetric(25, 0.5, 9))
        ops = G.normalize(w)
        cfg = _cfg()
        values, vectors = N.top_eigenvectors(w, 6, cfg)
        s = ops.s_u.to_dense()
        for i in range(6):
            assert np.linalg.norm(s @ vectors[:, i] - values[i] * vectors[:, i]) <= cfg.eig_tol
        assert np.all(values <= 1 + 1e-9) and np.all(values >= -1 - 1e-9)
        assert np.all(np.diff(values) <= 1e-12)  # sorted descending

    def test_sign_convention_deterministic(self):
        w = G.from_dense(_random_symmetric(20, 0.5, 10))
        va, ua = N.top_eigenvectors(w, 3, _cfg(seed=4))
        vb, ub = N.top_eigenvectors(w, 3, _cfg(seed=4))
        assert np.array_equal(ua, ub)
        for j in range(3):
            idx = np.argmax(np.abs(ua[:, j]))
            assert ua[idx, j] > 0


class TestTwoWayCut:
    def test_two_cliques(self):
        w = _two_cliques()
        seg = N.two_way_cut(w, _cfg())
        assert np.array_equal(seg.labels, [0, 0, 0, 0, 1, 1, 1, 1])
        expected = 2 * 0.01 / (12 + 0.01)
        assert seg.ncut_value == pytest.approx(expected, rel=1e-9)
        assert seg.ncut_value == pytest.approx(_brute_force_best_ncut(w), rel=1e-12)

    def test_disconnected_zero_cut(self):
        a = np.zeros((6, 6))
        a[:3, :3] = 1.0
        a[3:, 3:] = 1.0
        np.fill_diagonal(a, 0.0)
        seg = N.two_way_cut(G.from_dense(a), _cfg())
        assert seg.ncut_value == 0.0
        assert len(np.unique(seg.labels)) == 2
        assert np.all(seg.labels[:3] == seg.labels[0])
        assert np.all(seg.labels[3:] == seg.labels[3])

    def test_complete_graph_matches_brute_force(self):
        a = np.ones((4, 4)) - np.eye(4)
        w = G.from_dense(a)
        seg = N.two_way_cut(w, _cfg())
        assert seg.ncut_value == pytest.approx(_brute_force_best_ncut(w), rel=1e-9)

    def test_value_self_consistent(self):
        for seed in range(5):
            w = G.from_dense(_random_symmetric(18, 0.4, seed + 30) + 0.01)
            seg = N.two_way_cut(w, _cfg(seed=seed))
            recomputed = N.ncut_value_from_labels(w, seg.labels)
            assert abs(seg.ncut_value - recomputed) <= 1e-12

    def test_near_brute_force_on_small_graphs(self):
        for seed in range(10):
            dense = _random_symmetric(11, 0.5, seed + 50) + 0.005
            np.fill_diagonal(dense, 0.0)
            w = G.from_dense(dense)
            seg = N.two_way_cut(w, _cfg(seed=seed))
            best = _brute_force_best_ncut(w)
            assert seg.ncut_value <= 1.1 * best + 1e-12

    def test_deterministic(self):
        w = G.from_dense(_random_symmetric(30, 0.3, 77) + 0.01)
        a = N.two_way_cut(w, _cfg(seed=5))
        b = N.two_way_cut(w, _cfg(seed=5))
        assert np.array_equal(a.labels, b.labels)
        assert a.ncut_value == b.ncut_value


class TestKWayCut:
    def test_matches_two_way_on_cliques(self):
        w = _two_cliques()
        a = N.two_way_cut(w, _cfg())
        b = N.k_way_cut(w, 2, _cfg())
        assert np.array_equal(a.labels, b.labels)

    def test_k_equals_n(self):
        w = _two_cliques()
        seg = N.k_way_cut(w, 8, _cfg())
        assert np.array_equal(seg.labels, np.arange(8))

    def test_three_components_exact(self):
        a = np.zeros((12, 12))
        for b in range(3):
            a[4 * b : 4 * b + 4, 4 * b : 4 * b + 4] = 1.0
        np.fill_diagonal(a, 0.0)
        seg = N.k_way_cut(G.from_dense(a), 3, _cfg())
        assert seg.ncut_value == pytest.approx(0.0, abs=1e-12)
        assert np.array_equal(seg.labels, np.repeat([0, 1, 2], 4))

    def test_labels_renumbered_by_first_member(self):
        w = G.from_dense(_random_symmetric(15, 0.5, 60) + 0.02)
        seg = N.k_way_cut(w, 3, _cfg(seed=2))
        firsts = [np.flatnonzero(seg.labels == c)[0] for c in range(3)]
        assert firsts == sorted(firsts)
        assert seg.labels[0] == 0

    def test_recursive_bisection(self):
        a = np.zeros((12, 12))
        for b in range(3):
            a[4 * b : 4 * b + 4, 4 * b : 4 * b + 4] = 1.0
        np.fill_diagonal(a, 0.0)
        a[3, 4] = a[4, 3] = 0.001
        a[7, 8] = a[8, 7] = 0.001
        seg = N.k_way_cut(G.from_dense(a), 3, _cfg(), recursive=True)
        assert np.array_equal(seg.labels, np.repeat([0, 1, 2], 4))


class TestSpectralLearningEdit:
    def test_empty_constraints_identity(self):
        w = G.from_dense(_random_symmetric(10, 0.4, 70))
        cs = ConstraintSet(must=frozenset(), cannot=frozenset())
        out = N.spectral_learning_edit(w, cs)
        assert np.array_equal(out.to_dense(), w.to_dense())

    def test_must_link_inserts_max_weight(self):
        dense = _random_symmetric(10, 0.4, 71)
        w = G.from_dense(dense)
        w_max = dense.max()
        cs = ConstraintSet(must=frozenset({(0, 9)}), cannot=frozenset())
        out = N.spectral_learning_edit(w, cs).to_dense()
        assert out[0, 9] == w_max and out[9, 0] == w_max

    def test_cannot_link_removes_edge(self):
        dense = np.zeros((5, 5))
        dense[1, 2] = dense[2, 1] = 0.8
        dense[0, 1] = dense[1, 0] = 0.5
        w = G.from_dense(dense)
        cs = ConstraintSet(must=frozenset(), cannot=frozenset({(1, 2)}))
        out = N.spectral_learning_edit(w, cs)
        expected = dense.copy()
        expected[1, 2] = expected[2, 1] = 0.0
        assert np.array_equal(out.to_dense(), expected)
        assert out.nnz == 2


class TestSegmentationIO:
    def test_rle_roundtrip(self):
        rng = np.random.default_rng(80)
        labels = rng.integers(0, 4, size=200)
        assert np.array_equal(N.rle_decode(N.rle_encode(labels)), labels)

    def test_save_and_reload(self, tmp_path):
        labels = np.repeat([0, 1], 8)
        seg = N.Segmentation(labels=labels, k=2, ncut_value=0.25)
        png = tmp_path / "seg.png"
        sidecar = tmp_path / "seg.json"
        N.save_segmentation(seg, 4, 4, png, sidecar)
        back = N.load_segmentation_json(sidecar)
        assert np.array_equal(back.labels, labels)
        assert back.k == 2 and back.ncut_value == 0.25

        from PIL import Image

        arr = np.asarray(Image.open(png).convert("RGB"))
        assert arr.shape == (4, 4, 3)
        assert len(np.unique(arr.reshape(-1, 3), axis=0)) == 2

    def test_segmentation_invariants(self):
        with pytest.raises(ValueError):
            N.Segmentation(labels=np.array([0, 2]), k=2, ncut_value=0.0)
        with pytest.raises(ValueError):
            N.Segmentation(labels=np.array([0, 1]), k=2, ncut_value=-1.0)


class TestEdgeCases:
    def test_eigensolver_budget_warning(self):
        import warnings

        from scpseg.errors import NoConvergenceWarning

        w = G.from_dense(_random_symmetric(40, 0.4, 90) + 0.01)
        cfg = N.SpectralConfig(seed=0, eig_tol=1e-14, eig_max_iter=8)
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            values, vectors = N.top_eigenvectors(w, 3, cfg)
        assert values.shape == (3,) and vectors.shape == (40, 3)
        assert any(issubclass(r.category, NoConvergenceWarning) for r in rec)

    def test_k_way_rejects_bad_k(self):
        w = _two_cliques()
        with pytest.raises(ValueError):
            N.k_way_cut(w, 1, _cfg())
        with pytest.raises(ValueError):
            N.k_way_cut(w, 9, _cfg())

    def test_too_many_eigenpairs_rejected(self):
        w = _two_cliques()
        with pytest.raises(ValueError):
            N.top_eigenvectors(w, 9, _cfg())
