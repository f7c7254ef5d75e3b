import numpy as np
import pytest

from warpkit.exceptions import (
    DegenerateData,
    DegenerateFrame,
    DimensionMismatch,
    InvalidSpec,
    TooFewFrames,
)
from warpkit.shape import (
    PointDistributionModel,
    RigidParams,
    apply_pdm,
    build_pdm,
    euler_rotation,
    procrustes_align,
    project_2d,
    remove_rigid,
    synth_dataset,
)


def random_pdm(rng, n_landmarks=8, n_components=4):
    pdm = PointDistributionModel(n_components=n_components)
    pdm.mean_shape_ = rng.normal(size=(n_landmarks, 3))
    basis, _ = np.linalg.qr(rng.normal(size=(3 * n_landmarks, n_components)))
    pdm.basis_ = basis
    pdm.variances_ = np.linspace(1.0, 0.2, n_components)
    return pdm


def random_rigid(rng, max_angle=0.6):
    return RigidParams(
        float(rng.uniform(0.5, 2.0)),
        euler_rotation(*rng.uniform(-max_angle, max_angle, 3)),
        rng.uniform(-3.0, 3.0, 3),
    )


class TestRigidParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            RigidParams(0.0, np.eye(3), np.zeros(3))
        with pytest.raises(ValueError):
            RigidParams(1.0, np.eye(3) * 2.0, np.zeros(3))
        with pytest.raises(ValueError):
            RigidParams(1.0, np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_euler_rotation_is_proper(self, rng):
        for _ in range(20):
            R = euler_rotation(*rng.uniform(-np.pi, np.pi, 3))
            assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


class TestBuildPdm:
    def test_identical_frames_degenerate(self, rng):
        frame = rng.normal(size=(5, 3))
        with pytest.raises(DegenerateData) as exc:
            build_pdm([frame.copy() for _ in range(6)], 1)
        assert exc.value.rank == 0

    def test_rank_one_closed_form(self, rng):
        base = rng.normal(size=(5, 3))
        v = rng.normal(size=15)
        v /= np.linalg.norm(v)
        qs = rng.normal(size=12) * 2.0
        frames = [base + (q * v).reshape(5, 3) for q in qs]
        pdm = build_pdm(frames, 1)
        assert abs(abs(pdm.basis_[:, 0] @ v) - 1.0) < 1e-10
        assert pdm.variances_[0] == pytest.approx(np.var(qs, ddof=1), rel=1e-10)

    def test_full_rank_reconstruction(self, rng):
        sub, _ = np.linalg.qr(rng.normal(size=(12, 3)))
        base = rng.normal(size=(4, 3))
        frames = [base + (sub @ rng.normal(size=3)).reshape(4, 3) for _ in range(10)]
        pdm = build_pdm(frames, 3)
        for f in frames:
            q = pdm.basis_.T @ (f.reshape(-1) - pdm.mean_shape_.reshape(-1))
            recon = pdm.mean_shape_.reshape(-1) + pdm.basis_ @ q
            assert np.abs(recon - f.reshape(-1)).max() < 1e-9

    def test_mean_is_sample_mean(self, rng):
        frames = [rng.normal(size=(4, 3)) for _ in range(8)]
        pdm = build_pdm(frames, 2)
        np.testing.assert_allclose(pdm.mean_shape_,
                                   np.mean(np.stack(frames), axis=0), atol=1e-12)

    def test_orthonormal_basis(self, rng):
        frames = [rng.normal(size=(6, 3)) for _ in range(15)]
        pdm = build_pdm(frames, 5)
        gram = pdm.basis_.T @ pdm.basis_
        assert np.abs(gram - np.eye(5)).max() <= 1e-10
        assert np.all(np.diff(pdm.variances_) <= 1e-12)

    def test_too_few_frames(self, rng):
        with pytest.raises(TooFewFrames):
            build_pdm([rng.normal(size=(4, 3)) for _ in range(3)], 3)

    def test_pca_beats_random_frames(self, rng):
        frames = [rng.normal(size=(4, 3)) for _ in range(20)]
        pdm = build_pdm(frames, 2)
        X = np.stack([f.reshape(-1) for f in frames])
        Xc = X - X.mean(axis=0)

        def recon_err(basis):
            return float(np.sum((Xc - (Xc @ basis) @ basis.T) ** 2))

        pca_err = recon_err(pdm.basis_)
        for _ in range(1000):
            Qr, _ = np.linalg.qr(rng.normal(size=(12, 2)))
            assert pca_err <= recon_err(Qr) + 1e-9


class TestSynthesisAndProjection:
    def test_zero_q_identity_rigid_is_mean(self, rng):
        pdm = random_pdm(rng)
        frame = pdm.synthesize(np.zeros(4), RigidParams.identity())
        np.testing.assert_array_equal(frame, pdm.mean_shape_)

    def test_translation_only(self, rng):
        pdm = random_pdm(rng)
        t = np.array([1.0, 2.0, 3.0])
        frame = apply_pdm(pdm, np.zeros(4), RigidParams(1.0, np.eye(3), t))
        np.testing.assert_allclose(frame, pdm.mean_shape_ + t, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        pdm = random_pdm(rng)
        with pytest.raises(DimensionMismatch):
            pdm.synthesize(np.zeros(7))

    def test_project_2d(self):
        assert project_2d(np.array([[1.0, 2.0, 3.0]])).tolist() == [[1.0, 2.0]]
        frame = np.array([[1.0, 2.0, 0.0], [4.0, 5.0, 0.0], [0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(project_2d(frame), frame[:, :2])

    def test_projection_shrinks_norms(self, rng):
        frame = rng.normal(size=(6, 3))
        flat = project_2d(frame)
        assert np.all(np.linalg.norm(flat, axis=1)
                      <= np.linalg.norm(frame, axis=1) + 1e-12)


class TestProcrustes:
    def test_exact_alignment(self, rng):
        ref = rng.normal(size=(7, 3))
        g = random_rigid(rng)
        moved = g.apply(ref)
        rigid, aligned = procrustes_align(moved, ref)
        np.testing.assert_allclose(aligned, ref, atol=1e-10)

    def test_degenerate_collinear(self):
        pts = np.outer(np.arange(5.0), np.array([1.0, 0.0, 0.0]))
        with pytest.raises(DegenerateFrame):
            procrustes_align(pts, pts + 1.0)


class TestRemoveRigid:
    def test_round_trip(self, rng):
        pdm = random_pdm(rng)
        for _ in range(30):
            q = rng.normal(0.0, 0.4, size=4)
            rigid = random_rigid(rng)
            frame = pdm.synthesize(q, rigid)
            qs, rigids = pdm.remove_rigid([frame])
            assert np.abs(qs.values[0] - q).max() < 1e-8
            assert abs(rigids[0].scale - rigid.scale) < 1e-8
            assert np.abs(rigids[0].rotation - rigid.rotation).max() < 1e-8
            assert np.abs(rigids[0].translation - rigid.translation).max() < 1e-8

    def test_mean_shape_gives_zero_q(self, rng):
        pdm = random_pdm(rng)
        qs, _ = pdm.remove_rigid([pdm.mean_shape_.copy()] * 3)
        assert np.abs(qs.values).max() < 1e-10

    def test_rigid_invariance(self, rng):
        pdm = random_pdm(rng)
        seq = [pdm.synthesize(rng.normal(0, 0.3, 4), random_rigid(rng))
               for _ in range(4)]
        g = random_rigid(rng)
        q_a, _ = remove_rigid(seq, pdm)
        q_b, _ = remove_rigid([g.apply(f) for f in seq], pdm)
        assert np.abs(q_a.values - q_b.values).max() < 1e-8

    def test_two_constant_transforms_same_q(self, rng):
        pdm = random_pdm(rng)
        qs = [rng.normal(0, 0.3, 4) for _ in range(5)]
        g1, g2 = random_rigid(rng), random_rigid(rng)
        seq1 = [g1.apply(pdm.synthesize(q)) for q in qs]
        seq2 = [g2.apply(pdm.synthesize(q)) for q in qs]
        r1, _ = pdm.remove_rigid(seq1)
        r2, _ = pdm.remove_rigid(seq2)
        assert np.abs(r1.values - r2.values).max() < 1e-8

    def test_landmark_count_mismatch(self, rng):
        pdm = random_pdm(rng)
        with pytest.raises(DimensionMismatch):
            pdm.remove_rigid([rng.normal(size=(5, 3))])

    def test_transform_returns_q_array(self, rng):
        pdm = random_pdm(rng)
        seq = [pdm.synthesize(rng.normal(0, 0.3, 4)) for _ in range(3)]
        out = pdm.transform(seq)
        assert out.shape == (3, 4)


class TestPdmPersistence:
    def test_dict_roundtrip(self, rng):
        pdm = random_pdm(rng)
        back = PointDistributionModel.from_dict(pdm.to_dict())
        np.testing.assert_array_equal(back.mean_shape_, pdm.mean_shape_)
        np.testing.assert_array_equal(back.basis_, pdm.basis_)
        np.testing.assert_array_equal(back.variances_, pdm.variances_)


class TestSynthDataset:
    def test_deterministic(self):
        a = synth_dataset(2, 2, seed=9, frames_range=(5, 8))
        b = synth_dataset(2, 2, seed=9, frames_range=(5, 8))
        assert [it.label for it in a.dataset.items] == [it.label for it in b.dataset.items]
        for x, y in zip(a.dataset.items, b.dataset.items):
            np.testing.assert_array_equal(x.series.values, y.series.values)
        for x, y in zip(a.landmark_dataset.items, b.landmark_dataset.items):
            np.testing.assert_array_equal(x.series.values, y.series.values)

    def test_noiseless_recovery(self):
        sd = synth_dataset(2, 1, seed=4, noise=0.0, frames_range=(6, 9))
        for k, item in enumerate(sd.dataset.items):
            assert np.abs(item.series.values - sd.true_q[k]).max() < 1e-8

    def test_structure(self):
        sd = synth_dataset(3, 2, seed=0, frames_range=(5, 7))
        ds = sd.dataset
        assert len(ds) == 6
        assert len(ds.classes) == 3
        assert len(ds.subjects) == 6  # subjects are distinct per class
        assert ds.n_channels == 6
        assert sd.landmark_dataset.n_channels == 30
        assert len(sd.true_q) == 6 and len(sd.rigid_params) == 6

    def test_identical_templates_share_target(self):
        sd = synth_dataset(3, 1, seed=0, identical_templates=True, frames_range=(5, 6))
        targets = [tuple(t.target) for t in sd.templates.values()]
        assert len(set(targets)) == 1

    def test_invalid_specs(self):
        with pytest.raises(InvalidSpec):
            synth_dataset(1, 5)
        with pytest.raises(InvalidSpec):
            synth_dataset(2, 0)
        with pytest.raises(InvalidSpec):
            synth_dataset(2, 2, frames_range=(1, 4))
        with pytest.raises(InvalidSpec):
            synth_dataset(2, 2, noise=-0.1)
        with pytest.raises(InvalidSpec):
            synth_dataset(2, 2, n_landmarks=2)
        with pytest.raises(InvalidSpec):
            synth_dataset(2, 2, n_components=25, n_landmarks=10)

    def test_sequences_start_near_neutral(self):
        sd = synth_dataset(2, 2, seed=7, noise=0.0, frames_range=(6, 9))
        for item in sd.dataset.items:
            assert np.linalg.norm(item.series.values[0]) < 1e-6
