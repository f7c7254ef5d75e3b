"""3D point distribution model: PCA shape space, rigid removal, synthesis.

A shape is an M x 3 landmark frame.  The model composes a linear non-rigid
deformation (PCA basis over the stacked [x1,y1,z1,...] vectors) with a
similarity transform: frame = s * R * (mean + basis @ q) + t.  Removing
the similarity part turns a landmark sequence into the q-parameter time
series the kernels consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .core import LabeledDataset, LabeledSeries, TimeSeries, validate_series
from .exceptions import (
    DegenerateData,
    DegenerateFrame,
    DimensionMismatch,
    InvalidSpec,
    TooFewFrames,
)


@dataclass(frozen=True)
class RigidParams:
    """Similarity transform: positive scale, proper rotation, translation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).ravel()
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-10:
            raise ValueError("rotation is not orthogonal within 1e-10")
        if abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("rotation determinant is not +1 within 1e-10")

    @classmethod
    def identity(cls) -> "RigidParams":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {"scale": self.scale, "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}


def euler_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation matrix R1(alpha) R2(beta) R3(gamma) about the x, y, z axes."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    r1 = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    r2 = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    r3 = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return r1 @ r2 @ r3


def _as_frame(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionMismatch(f"expected an M x 3 frame, got shape {pts.shape}")
    if pts.shape[0] < 3:
        raise DegenerateFrame(f"need >= 3 landmarks, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("frame contains non-finite entries")
    return pts


def _check_nondegenerate(points: np.ndarray) -> None:
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[1] <= 1e-12 * max(svals[0], 1e-300):
        raise DegenerateFrame("landmarks are coincident or collinear")


def _similarity_fit(points: np.ndarray, reference: np.ndarray):
    # closed-form similarity Procrustes: aligned = s * R @ p + t minimizing
    # the Frobenius misfit to the reference
    mu_p = points.mean(axis=0)
    mu_r = reference.mean(axis=0)
    P = points - mu_p
    Q = reference - mu_r
    H = P.T @ Q
    U, S, Vt = np.linalg.svd(H)
    sign = 1.0 if np.linalg.det(Vt.T @ U.T) >= 0 else -1.0
    R = Vt.T @ np.diag([1.0, 1.0, sign]) @ U.T
    norm_p = float(np.sum(P * P))
    s = float(S[0] + S[1] + sign * S[2]) / norm_p
    t = mu_r - s * R @ mu_p
    return s, R, t


def procrustes_align(points, reference) -> tuple[RigidParams, np.ndarray]:
    """Similarity-align ``points`` onto ``reference``.

    Returns the fitted transform and the aligned copy of ``points``.
    Raises DegenerateFrame when the points are coincident or collinear.
    """
    pts = _as_frame(points)
    ref = _as_frame(reference)
    if pts.shape != ref.shape:
        raise DimensionMismatch(f"frames {pts.shape} vs {ref.shape}")
    _check_nondegenerate(pts)
    s, R, t = _similarity_fit(pts, ref)
    rigid = RigidParams(s, R, t)
    return rigid, rigid.apply(pts)


def project_2d(frame) -> np.ndarray:
    """Drop the z coordinate of every landmark (the fixed 2D projection)."""
    pts = np.asarray(frame, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionMismatch(f"expected an M x 3 frame, got shape {pts.shape}")
    return pts[:, :2].copy()


class PointDistributionModel(BaseEstimator, TransformerMixin):
    """PCA shape space over landmark frames.

    ``fit`` expects rigid-free frames (pre-align with
    :func:`procrustes_align` when they are not).  ``transform`` maps a
    landmark sequence to its q-parameter series; :meth:`remove_rigid` also
    returns the per-frame similarity transforms.
    """

    def __init__(self, n_components: int = 6, als_tol: float = 1e-13,
                 als_max_iter: int = 300):
        self.n_components = n_components
        self.als_tol = als_tol
        self.als_max_iter = als_max_iter

    # -- fitting ------------------------------------------------------------

    def fit(self, frames, y=None):
        if self.n_components < 1:
            raise ValueError(f"n_components must be >= 1, got {self.n_components}")
        frames = [_as_frame(f) for f in frames]
        if len(frames) < self.n_components + 1:
            raise TooFewFrames(
                f"{len(frames)} frames cannot support {self.n_components} components"
            )
        m = frames[0].shape[0]
        for f in frames:
            if f.shape[0] != m:
                raise DimensionMismatch("frames have differing landmark counts")
        X = np.stack([f.reshape(-1) for f in frames])
        mean = X.mean(axis=0)
        Xc = X - mean
        U, svals, Vt = np.linalg.svd(Xc, full_matrices=False)
        # floor the rank threshold at the data scale so centering round-off
        # (identical frames) does not masquerade as variance
        floor = 1e-12 * max(1.0, float(np.abs(X).max())) * math.sqrt(len(frames))
        rank = int(np.sum(svals > max(1e-10 * svals[0], floor)))
        if rank < self.n_components:
            raise DegenerateData(
                f"data rank {rank} below {self.n_components} components", rank=rank
            )
        basis = Vt[: self.n_components].T
        # deterministic sign: largest-magnitude entry of each column positive
        flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), range(basis.shape[1])])
        basis = basis * flip
        self.mean_shape_ = mean.reshape(m, 3)
        self.basis_ = basis
        self.variances_ = svals[: self.n_components] ** 2 / (len(frames) - 1)
        return self

    def _require_fitted(self):
        if not hasattr(self, "basis_"):
            raise NotFittedError("fit the model or load one before use")

    @property
    def n_landmarks(self) -> int:
        self._require_fitted()
        return self.mean_shape_.shape[0]

    # -- synthesis ----------------------------------------------------------

    def synthesize(self, q, rigid: RigidParams | None = None) -> np.ndarray:
        """Landmark frame s * R @ (mean_i + basis_i q) + t."""
        self._require_fitted()
        q = np.asarray(q, dtype=np.float64).ravel()
        if q.shape[0] != self.basis_.shape[1]:
            raise DimensionMismatch(
                f"q has {q.shape[0]} entries, model has {self.basis_.shape[1]}"
            )
        shape = self.mean_shape_ + (self.basis_ @ q).reshape(-1, 3)
        if rigid is None:
            return shape
        return rigid.apply(shape)

    # -- rigid removal ------------------------------------------------------

    def _fit_frame(self, pts: np.ndarray) -> tuple[np.ndarray, RigidParams]:
        # alternate Procrustes against the current non-rigid estimate with the
        # orthonormal-basis projection for q; the joint misfit is monotone
        q = np.zeros(self.basis_.shape[1])
        mean_vec = self.mean_shape_.reshape(-1)
        s, R, t = 1.0, np.eye(3), np.zeros(3)
        for _ in range(self.als_max_iter):
            target = (mean_vec + self.basis_ @ q).reshape(-1, 3)
            s, R, t = _similarity_fit(pts, target)
            aligned = s * pts @ R.T + t
            q_new = self.basis_.T @ (aligned.reshape(-1) - mean_vec)
            delta = float(np.max(np.abs(q_new - q)))
            q = q_new
            if delta < self.als_tol * max(1.0, float(np.max(np.abs(q)))):
                break
        inv_scale = 1.0 / s
        rigid = RigidParams(inv_scale, R.T, -inv_scale * (R.T @ t))
        return q, rigid

    def remove_rigid(self, seq) -> tuple[TimeSeries, list[RigidParams]]:
        """Strip per-frame similarity transforms from a landmark sequence.

        Returns the q-parameter series (one row per frame) and the fitted
        per-frame rigid parameters, oriented so that
        ``rigid.apply(synthesize(q))`` reproduces the input frame.
        """
        self._require_fitted()
        qs = []
        rigids = []
        for pts in seq:
            pts = _as_frame(pts)
            if pts.shape[0] != self.n_landmarks:
                raise DimensionMismatch(
                    f"frame has {pts.shape[0]} landmarks, model has {self.n_landmarks}"
                )
            _check_nondegenerate(pts)
            q, rigid = self._fit_frame(pts)
            qs.append(q)
            rigids.append(rigid)
        return TimeSeries(np.vstack(qs)), rigids

    def transform(self, seq) -> np.ndarray:
        return self.remove_rigid(seq)[0].values.copy()

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        self._require_fitted()
        return {
            "mean_shape": self.mean_shape_.tolist(),
            "basis": self.basis_.tolist(),
            "variances": self.variances_.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PointDistributionModel":
        basis = np.asarray(d["basis"], dtype=np.float64)
        pdm = cls(n_components=basis.shape[1])
        pdm.mean_shape_ = np.asarray(d["mean_shape"], dtype=np.float64)
        pdm.basis_ = basis
        pdm.variances_ = np.asarray(d["variances"], dtype=np.float64)
        return pdm


def build_pdm(frames, n_components: int) -> PointDistributionModel:
    """Fit a PDM to rigid-free frames (PCA mean, basis and variances)."""
    return PointDistributionModel(n_components=n_components).fit(frames)


def apply_pdm(pdm: PointDistributionModel, q, rigid: RigidParams) -> np.ndarray:
    return pdm.synthesize(q, rigid)


def remove_rigid(seq, pdm: PointDistributionModel):
    return pdm.remove_rigid(seq)


# ---------------------------------------------------------------------------
# synthetic labeled expression generator

@dataclass(frozen=True)
class ClassTemplate:
    target: np.ndarray
    curvature: float
    delay: float


@dataclass(frozen=True)
class SynthDataset:
    """Synthetic landmark study with full ground truth.

    ``dataset`` holds the rigid-removed q series (kernel-ready);
    ``landmark_dataset`` the raw T x 3M landmark sequences the q series
    were recovered from.
    """

    dataset: LabeledDataset
    landmark_dataset: LabeledDataset
    true_q: tuple[np.ndarray, ...]
    rigid_params: tuple[tuple[RigidParams, ...], ...]
    pdm: PointDistributionModel
    templates: dict
    shared_direction: np.ndarray
    subject_traits: dict


def synth_dataset(n_classes: int, subjects_per_class: int,
                  frames_range: tuple[int, int] = (18, 22), noise: float = 0.02,
                  seed: int = 0, n_landmarks: int = 10, n_components: int = 6,
                  identical_templates: bool = False) -> SynthDataset:
    """Generate a labeled neutral-to-apex expression study.

    Each class is performed by its own group of subjects, one sequence per
    subject.  Sequences ramp up a class-shared deformation from the start,
    while the class-specific target (its own direction, curvature and onset
    delay) only kicks in partway through, so short prefixes discriminate
    poorly and long ones well.  Subjects vary in amplitude and speed; white
    noise is added to the landmarks before a random per-frame similarity
    transform places each frame in space.  Deterministic for a given
    spec + seed.

    ``identical_templates`` gives every class the same template (an
    indistinguishable-by-construction control).
    """
    if n_classes < 2:
        raise InvalidSpec(f"need >= 2 classes, got {n_classes}")
    if subjects_per_class < 1:
        raise InvalidSpec(f"need >= 1 subject per class, got {subjects_per_class}")
    if n_classes * subjects_per_class < 2:
        raise InvalidSpec("need >= 2 subjects overall")
    # each class gets its own subjects, so the study has classes * spc of them
    lo, hi = frames_range
    if lo < 2 or hi < lo:
        raise InvalidSpec(f"bad frames range {frames_range}")
    if noise < 0:
        raise InvalidSpec(f"noise must be >= 0, got {noise}")
    if n_landmarks < 3:
        raise InvalidSpec(f"need >= 3 landmarks, got {n_landmarks}")
    if not 1 <= n_components <= 3 * n_landmarks - 7:
        raise InvalidSpec(
            f"n_components must be in [1, {3 * n_landmarks - 7}], got {n_components}"
        )

    root = np.random.SeedSequence(entropy=int(seed), spawn_key=(42,))
    ss_model, ss_class, ss_subject, ss_seq = root.spawn(4)

    rng = np.random.default_rng(ss_model)
    mean_shape = rng.normal(0.0, 1.0, size=(n_landmarks, 3))
    raw = rng.normal(size=(3 * n_landmarks, n_components))
    basis, _ = np.linalg.qr(raw)
    pdm = PointDistributionModel(n_components=n_components)
    pdm.mean_shape_ = mean_shape
    pdm.basis_ = basis
    pdm.variances_ = 0.6 ** np.arange(n_components)

    rng_c = np.random.default_rng(ss_class)
    if n_classes <= n_components:
        targets, _ = np.linalg.qr(rng_c.normal(size=(n_components, n_classes)))
        targets = targets.T
    else:
        targets = rng_c.normal(size=(n_classes, n_components))
        targets /= np.linalg.norm(targets, axis=1, keepdims=True)
    magnitudes = 1.0 + 0.25 * rng_c.random(n_classes)
    curvatures = rng_c.permutation(np.linspace(0.6, 1.8, n_classes))
    delays = rng_c.permutation(np.linspace(0.25, 0.45, n_classes))
    shared = targets.sum(axis=0)
    shared /= np.linalg.norm(shared)
    class_names = [f"class{c:02d}" for c in range(n_classes)]
    templates = {
        name: ClassTemplate(mag * tgt, float(curv), float(delay))
        for name, tgt, mag, curv, delay in zip(class_names, targets, magnitudes,
                                               curvatures, delays)
    }
    if identical_templates:
        first = templates[class_names[0]]
        templates = {name: first for name in class_names}

    rng_s = np.random.default_rng(ss_subject)
    subject_names = {
        cname: [f"s{c:02d}{s:02d}" for s in range(subjects_per_class)]
        for c, cname in enumerate(class_names)
    }
    traits = {
        name: {
            "amplitude": float(np.clip(1.0 + 0.15 * rng_s.standard_normal(), 0.6, 1.4)),
            "speed": float(np.clip(1.0 + 0.2 * rng_s.standard_normal(), 0.6, 1.6)),
        }
        for cname in class_names
        for name in subject_names[cname]
    }

    seq_seeds = ss_seq.spawn(n_classes * subjects_per_class)
    q_items, lm_items, true_q, rigid_all = [], [], [], []
    k = 0
    for cname in class_names:
        tpl = templates[cname]
        for sname in subject_names[cname]:
            g = np.random.default_rng(seq_seeds[k])
            k += 1
            T = int(g.integers(lo, hi + 1))
            phase = np.clip(np.linspace(0.0, 1.0, T) * traits[sname]["speed"], 0.0, 1.0)
            late = np.clip((phase - tpl.delay) / (1.0 - tpl.delay), 0.0, 1.0)
            ramp = late ** tpl.curvature
            q_true = traits[sname]["amplitude"] * (
                0.6 * np.outer(phase, shared) + np.outer(ramp, tpl.target))

            frames = []
            rigids = []
            for t_idx in range(T):
                shape = mean_shape + (basis @ q_true[t_idx]).reshape(-1, 3)
                if noise > 0:
                    shape = shape + noise * g.normal(size=shape.shape)
                angles = g.uniform(-0.25, 0.25, size=3)
                rigid = RigidParams(
                    float(g.uniform(0.8, 1.25)),
                    euler_rotation(*angles),
                    g.uniform(-2.0, 2.0, size=3),
                )
                frames.append(rigid.apply(shape))
                rigids.append(rigid)

            q_hat, _ = pdm.remove_rigid(frames)
            q_items.append(LabeledSeries(q_hat, cname, sname))
            lm_series = validate_series(np.stack([f.reshape(-1) for f in frames]))
            lm_items.append(LabeledSeries(lm_series, cname, sname))
            true_q.append(q_true)
            rigid_all.append(tuple(rigids))

    return SynthDataset(
        dataset=LabeledDataset(tuple(q_items)),
        landmark_dataset=LabeledDataset(tuple(lm_items)),
        true_q=tuple(true_q),
        rigid_params=tuple(rigid_all),
        pdm=pdm,
        templates=templates,
        shared_direction=shared,
        subject_traits=traits,
    )
