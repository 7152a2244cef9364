"""Small-dimension exact linear algebra: subspaces, isometries, graph matrices.

Everything here is pure and value-like; arrays are treated as immutable
after construction, so all operations are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from .errors import PreconditionViolated

ORTHO_TOL = 1e-12
SPAN_TOL = 1e-10
GRAPH_RANK_TOL = 1e-9


def matrix_norm(a) -> float:
    """Column-l2 aggregate norm (sum of squared column norms, rooted).

    Dominates the operator norm for every real matrix.
    """
    a = np.asarray(a, dtype=float)
    return float(np.sqrt((a * a).sum()))


def project_to_first_m(x, m: int) -> np.ndarray:
    """Standard projection of ambient vectors onto the first m coordinates."""
    x = np.asarray(x, dtype=float)
    if not 0 < m < x.shape[-1]:
        raise ValueError(f"projection needs 0 < m < n, got m={m}, n={x.shape[-1]}")
    return x[..., :m]


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear m-dimensional subspace of R^n via an orthonormal basis matrix.

    Two subspaces with the same column span compare equal regardless of the
    particular basis chosen.
    """

    basis: np.ndarray  # (n, m), orthonormal columns

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] < b.shape[1] or b.shape[1] < 1:
            raise ValueError(f"basis must be n x m with n >= m >= 1, got {b.shape}")
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-10):
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def from_span(cls, vectors) -> "Subspace":
        """Orthonormalize spanning columns (QR with a deterministic sign fix)."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        q, r = np.linalg.qr(v)
        d = np.diagonal(r).copy()
        d[d == 0] = 1.0
        q = q * np.sign(d)
        if np.linalg.matrix_rank(v, tol=1e-12) < v.shape[1]:
            raise ValueError("spanning vectors are linearly dependent")
        return cls(q)

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def distance_of(self, v) -> float:
        """Euclidean distance from a vector to the span."""
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.basis @ (self.basis.T @ v)))

    def max_principal_angle(self, other: "Subspace") -> float:
        if self.ambient_dim != other.ambient_dim or self.dim != other.dim:
            raise ValueError("subspace dimensions do not agree")
        angles = subspace_angles(self.basis, other.basis)
        return float(angles.max()) if angles.size else 0.0

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        if self.ambient_dim != other.ambient_dim or self.dim != other.dim:
            return False
        return self.max_principal_angle(other) <= SPAN_TOL

    __hash__ = None


@dataclass(frozen=True)
class Isometry:
    """Rigid motion x -> R x + T of R^n with R a rotation (det +1)."""

    rotation: np.ndarray  # (n, n)
    translation: np.ndarray  # (n,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        n = r.shape[0]
        if r.shape != (n, n) or t.shape != (n,):
            raise ValueError("rotation/translation shapes do not agree")
        if not np.allclose(r.T @ r, np.eye(n), atol=1e-10):
            raise ValueError("rotation is not orthogonal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation has negative determinant")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.rotation.T + self.translation

    def inverse_apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.translation) @ self.rotation

    def inverse(self) -> "Isometry":
        return Isometry(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "Isometry") -> "Isometry":
        """self after other: x -> self(other(x))."""
        return Isometry(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class GraphMatrixResult:
    """Slope matrix A with E = span{(e_j, a_j)} and its aggregate norm."""

    matrix: np.ndarray  # (k, m)
    norm: float


def complete_orthonormal_frame(basis) -> np.ndarray:
    """Extend orthonormal columns to a full rotation matrix of R^n.

    Completion is Gram-Schmidt over the identity columns with pivoting on
    the largest residual, which keeps the result deterministic and well
    conditioned.  The last column's sign is flipped if needed for det +1.
    """
    b = np.asarray(basis, dtype=float)
    n, m = b.shape
    cols = [b[:, j].copy() for j in range(m)]
    candidates = np.eye(n)
    while len(cols) < n:
        q = np.column_stack(cols)
        resid = candidates - q @ (q.T @ candidates)
        norms = np.linalg.norm(resid, axis=0)
        j = int(np.argmax(norms))
        v = resid[:, j]
        v = v - q @ (q.T @ v)  # second pass for stability
        v /= np.linalg.norm(v)
        cols.append(v)
    frame = np.column_stack(cols)
    if np.linalg.det(frame) < 0:
        frame = frame.copy()
        frame[:, -1] = -frame[:, -1]
    return frame


def make_admissible_isometry(base, plane: Subspace) -> Isometry:
    """Canonical rigid motion sending 0 to ``base`` and R^m x {0} onto the plane.

    Admissible isometries are not unique; this picks the deterministic frame
    completion of the plane's stored basis so that repeated runs agree.
    """
    base = np.asarray(base, dtype=float).reshape(-1)
    if base.shape[0] != plane.ambient_dim:
        raise ValueError("base point dimension does not match the plane")
    return Isometry(complete_orthonormal_frame(plane.basis), base)


def is_admissible(iso: Isometry, base, plane: Subspace, tol: float = SPAN_TOL) -> bool:
    """True iff iso(0) = base and the rotation carries R^m x {0} onto the plane."""
    base = np.asarray(base, dtype=float).reshape(-1)
    if iso.dim != plane.ambient_dim or base.shape[0] != iso.dim:
        return False
    if np.linalg.norm(iso.apply(np.zeros(iso.dim)) - base) > tol:
        return False
    image = Subspace(iso.rotation[:, : plane.dim])
    return image.max_principal_angle(plane) <= tol


def randomize_admissible(iso: Isometry, m: int, rng) -> Isometry:
    """Another admissible isometry at the same point: random in-plane and
    normal-space twists composed with the given frame."""
    n = iso.dim
    k = n - m
    p = random_rotation(m, rng) if m > 1 else np.eye(1)
    s = random_rotation(k, rng) if k > 1 else np.eye(max(k, 1))[:k, :k]
    if rng.random() < 0.5 and m >= 1 and k >= 1:
        # allow a reflection pair (still det +1 overall)
        p = p.copy()
        s = s.copy()
        p[:, 0] = -p[:, 0]
        s[:, 0] = -s[:, 0]
    block = np.zeros((n, n))
    block[:m, :m] = p
    block[m:, m:] = s
    return Isometry(iso.rotation @ block, iso.translation)


def random_rotation(n: int, rng) -> np.ndarray:
    """Haar-ish random rotation from QR of a Gaussian matrix, det fixed to +1."""
    if n == 0:
        return np.zeros((0, 0))
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diagonal(r))
    if np.linalg.det(q) < 0:
        q = q.copy()
        q[:, -1] = -q[:, -1]
    return q


def subspace_graph_matrix(e: Subspace) -> GraphMatrixResult | None:
    """Slope matrix of a subspace over R^m x {0}, or None when vertical.

    The subspace is a graph exactly when the top m x m block of its basis
    has full rank; rank is decided by the smallest singular value against
    ``GRAPH_RANK_TOL``.
    """
    m = e.dim
    top = e.basis[:m, :]
    bottom = e.basis[m:, :]
    svals = np.linalg.svd(top, compute_uv=False)
    if svals.min() <= GRAPH_RANK_TOL:
        return None
    a = bottom @ np.linalg.inv(top)
    return GraphMatrixResult(matrix=a, norm=matrix_norm(a))


def graph_matrix_from_probes(e: Subspace, probes, L: float) -> GraphMatrixResult:
    """Certified slope matrix from m probe points close to the horizontal axes.

    The probes must lie on the subspace and satisfy
    ``|v_j - (e_j, 0)| <= L / (3 sqrt(m))`` for L <= 1; then the subspace is
    a graph with aggregate slope norm at most L.  The matrix itself is read
    off the subspace (the probes only validate the hypothesis), so nearly
    coincident probes cannot make the computation ill conditioned.
    """
    m = e.dim
    n = e.ambient_dim
    if L > 1.0 + 1e-12:
        raise ValueError(f"probe bound requires L <= 1, got {L}")
    probes = [np.asarray(v, dtype=float).reshape(-1) for v in probes]
    if len(probes) != m:
        raise ValueError(f"expected {m} probes, got {len(probes)}")
    budget = L / (3.0 * np.sqrt(m))
    for j, v in enumerate(probes):
        if v.shape[0] != n:
            raise ValueError(f"probe {j} has wrong ambient dimension")
        if e.distance_of(v) > SPAN_TOL:
            raise PreconditionViolated(
                f"probe {j} is off the subspace (distance {e.distance_of(v):.3e})",
                index=j,
            )
        ej = np.zeros(n)
        ej[j] = 1.0
        if np.linalg.norm(v - ej) > budget * (1 + 1e-12) + 1e-15:
            raise PreconditionViolated(
                f"probe {j} too far from its axis point: "
                f"{np.linalg.norm(v - ej):.6e} > {budget:.6e}",
                index=j,
            )
    result = subspace_graph_matrix(e)
    if result is None:
        # Unreachable when the hypothesis holds; flag the construction.
        raise PreconditionViolated("probes valid but subspace is vertical", index=-1)
    if result.norm > L * (1 + 1e-9) + 1e-12:
        raise PreconditionViolated(
            f"certified norm {result.norm:.6e} exceeds the bound {L:.6e}", index=-1
        )
    return result
