"""Truncated Fock-space linear algebra.

Index convention for the joint space is qubit ⊗ resonator, so the basis
vector |q, n> sits at ``q * resonator_dim + n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidState, LayoutMismatch, NonFinite, TruncationTooSmall

NORM_TOL = 1e-9
EIG_TOL = 1e-8


def truncation_guard(alpha: complex) -> int:
    """Smallest Fock dimension considered adequate for a displacement ``alpha``."""
    r = abs(alpha)
    return int(np.ceil(r * r + 6.0 * r + 10.0))


@dataclass(frozen=True)
class HilbertLayout:
    resonator_dim: int
    qubit_levels: int = 1

    def __post_init__(self):
        if int(self.resonator_dim) != self.resonator_dim or self.resonator_dim < 2:
            raise ValueError(f"resonator_dim must be an integer >= 2, got {self.resonator_dim}")
        if self.qubit_levels not in (1, 2):
            raise ValueError(f"qubit_levels must be 1 or 2, got {self.qubit_levels}")

    @property
    def dim(self) -> int:
        return self.qubit_levels * self.resonator_dim

    def resonator_only(self) -> "HilbertLayout":
        return HilbertLayout(self.resonator_dim, 1)

    def with_qubit(self) -> "HilbertLayout":
        return HilbertLayout(self.resonator_dim, 2)

    def embed(self, res_op: np.ndarray) -> np.ndarray:
        """Lift a resonator-factor matrix to the joint space."""
        if self.qubit_levels == 1:
            return np.asarray(res_op, dtype=complex)
        return np.kron(np.eye(self.qubit_levels), res_op).astype(complex)

    def embed_qubit(self, q_op: np.ndarray) -> np.ndarray:
        """Lift a 2x2 qubit matrix to the joint space."""
        if self.qubit_levels != 2:
            raise LayoutMismatch("layout has no qubit factor")
        return np.kron(q_op, np.eye(self.resonator_dim)).astype(complex)

    def photon_numbers(self) -> np.ndarray:
        return np.tile(np.arange(self.resonator_dim), self.qubit_levels)

    def qubit_numbers(self) -> np.ndarray:
        return np.repeat(np.arange(self.qubit_levels), self.resonator_dim)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex, copy=True)
    arr.flags.writeable = False
    return arr


class QuantumState:
    """Pure state vector or density matrix on a :class:`HilbertLayout`.

    The array is copied and frozen at construction.
    """

    __slots__ = ("layout", "data")

    def __init__(self, layout: HilbertLayout, data, check: bool = True):
        arr = np.asarray(data, dtype=complex)
        n = layout.dim
        if arr.shape not in ((n,), (n, n)):
            raise LayoutMismatch(f"state shape {arr.shape} does not match layout dimension {n}")
        if not np.all(np.isfinite(arr)):
            raise NonFinite("state contains NaN or Inf")
        if check:
            _validate_state(arr)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "data", _readonly(arr))

    def __setattr__(self, key, value):
        raise AttributeError("QuantumState is immutable")

    def __repr__(self):
        kind = "pure" if self.is_pure else "density"
        return f"QuantumState({kind}, layout={self.layout})"

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def to_density(self) -> "QuantumState":
        return QuantumState(self.layout, self.density(), check=False)

    def normalized(self) -> "QuantumState":
        if self.is_pure:
            return QuantumState(self.layout, self.data / np.linalg.norm(self.data), check=False)
        return QuantumState(self.layout, self.data / np.trace(self.data).real, check=False)


def _validate_state(arr: np.ndarray) -> None:
    if arr.ndim == 1:
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidState(f"state vector norm {norm:.12g} differs from 1")
        return
    if np.max(np.abs(arr - arr.conj().T)) > NORM_TOL:
        raise InvalidState("density matrix is not Hermitian")
    tr = np.trace(arr)
    if abs(tr - 1.0) > NORM_TOL:
        raise InvalidState(f"density matrix trace {tr.real:.12g} differs from 1")
    herm = 0.5 * (arr + arr.conj().T)
    if np.linalg.eigvalsh(herm).min() < -EIG_TOL:
        raise InvalidState("density matrix has negative eigenvalues")


class OperatorMatrix:
    """Dense operator on a layout.

    If ``unitary_tol`` is given the matrix is checked for U†U = I at that
    tolerance.
    """

    __slots__ = ("layout", "matrix", "unitary_tol")

    def __init__(self, layout: HilbertLayout, matrix, unitary_tol: float | None = None):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (layout.dim, layout.dim):
            raise LayoutMismatch(f"operator shape {m.shape} does not match layout dimension {layout.dim}")
        if unitary_tol is not None:
            err = np.max(np.abs(m.conj().T @ m - np.eye(layout.dim)))
            if err > unitary_tol:
                raise TruncationTooSmall(f"operator deviates from unitarity by {err:.3g}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", _readonly(m))
        object.__setattr__(self, "unitary_tol", unitary_tol)

    def __setattr__(self, key, value):
        raise AttributeError("OperatorMatrix is immutable")

    def __repr__(self):
        return f"OperatorMatrix(layout={self.layout})"

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.matrix.conj().T, self.unitary_tol)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _same_layout(self.layout, other.layout)
            tol = None
            if self.unitary_tol is not None and other.unitary_tol is not None:
                tol = self.unitary_tol + other.unitary_tol
            return OperatorMatrix(self.layout, self.matrix @ other.matrix, tol)
        if isinstance(other, QuantumState):
            return self.apply(other)
        return NotImplemented

    def apply(self, state: QuantumState) -> QuantumState:
        """U|ψ> for kets and UρU† for density matrices (no normalization check)."""
        _same_layout(self.layout, state.layout)
        if state.is_pure:
            return QuantumState(self.layout, self.matrix @ state.data, check=False)
        return QuantumState(self.layout, self.matrix @ state.data @ self.matrix.conj().T, check=False)


def _same_layout(l1: HilbertLayout, l2: HilbertLayout) -> None:
    if l1 != l2:
        raise LayoutMismatch(f"layouts differ: {l1} vs {l2}")


def _as_array(m) -> np.ndarray:
    return m.matrix if isinstance(m, OperatorMatrix) else np.asarray(m, dtype=complex)


def make_ladder(layout: HilbertLayout):
    """Return (a, a_dagger, number) on the layout."""
    d = layout.resonator_dim
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    num = np.diag(np.arange(d, dtype=float)).astype(complex)
    return (
        OperatorMatrix(layout, layout.embed(a)),
        OperatorMatrix(layout, layout.embed(a.conj().T)),
        OperatorMatrix(layout, layout.embed(num)),
    )


def parity_operator(layout: HilbertLayout) -> OperatorMatrix:
    signs = (-1.0) ** np.arange(layout.resonator_dim)
    return OperatorMatrix(layout, layout.embed(np.diag(signs)), unitary_tol=0.0)


def displacement(alpha: complex, layout: HilbertLayout, check: bool = True) -> OperatorMatrix:
    """D(alpha) = exp(alpha a† - alpha* a) by dense matrix exponential."""
    if check and truncation_guard(alpha) > layout.resonator_dim:
        raise TruncationTooSmall(
            f"|alpha|={abs(alpha):.4g} needs resonator_dim >= {truncation_guard(alpha)}, "
            f"got {layout.resonator_dim}"
        )
    d = layout.resonator_dim
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    gen = alpha * a.conj().T - np.conj(alpha) * a
    res = _expm(gen)
    return OperatorMatrix(layout, layout.embed(res), unitary_tol=1e-8)


# Padé coefficients and 1-norm thresholds for scaling-and-squaring (Higham 2005).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}
_THETA = ((3, 1.495585217958292e-2), (5, 2.539398330063230e-1),
          (7, 9.504178996162932e-1), (9, 2.097847961257068e0))
_THETA13 = 5.371920351148152


def _pade_low(A, m):
    b = _PADE[m]
    ident = np.eye(A.shape[0], dtype=A.dtype)
    A2 = A @ A
    powers = [ident, A2]
    for _ in range(2, m // 2 + 1):
        powers.append(powers[-1] @ A2)
    U = sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
    V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return A @ U, V


def _pade13(A):
    b = _PADE[13]
    ident = np.eye(A.shape[0], dtype=A.dtype)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def _expm(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix_exponential input contains NaN or Inf")
    if A.shape[0] == 0:
        return A.copy()
    norm = np.linalg.norm(A, 1)
    for m, theta in _THETA:
        if norm <= theta:
            U, V = _pade_low(A, m)
            return np.linalg.solve(V - U, V + U)
    s = max(0, int(np.ceil(np.log2(norm / _THETA13))))
    U, V = _pade13(A / 2.0**s)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    if not np.all(np.isfinite(R)):
        raise NonFinite("matrix_exponential overflowed")
    return R


def matrix_exponential(M):
    """exp(M) by Padé scaling-and-squaring.

    Accepts an :class:`OperatorMatrix` (returned wrapped) or a plain array.
    """
    if isinstance(M, OperatorMatrix):
        return OperatorMatrix(M.layout, _expm(M.matrix))
    return _expm(M)


def fidelity_trace(s1: QuantumState, s2: QuantumState) -> float:
    """Tr[ρ1 ρ2] with pure states promoted to projectors."""
    _same_layout(s1.layout, s2.layout)
    if s1.is_pure and s2.is_pure:
        return float(abs(np.vdot(s1.data, s2.data)) ** 2)
    if s1.is_pure or s2.is_pure:
        psi, rho = (s1.data, s2.data) if s1.is_pure else (s2.data, s1.data)
        return float(np.real(np.vdot(psi, rho @ psi)))
    return float(np.real(np.sum(s1.data * s2.data.T)))


def expectation(op, state: QuantumState) -> complex:
    m = _as_array(op)
    if state.is_pure:
        return complex(np.vdot(state.data, m @ state.data))
    return complex(np.trace(m @ state.data))


def fock(layout: HilbertLayout, n: int, qubit: int = 0) -> QuantumState:
    if not 0 <= n < layout.resonator_dim:
        raise TruncationTooSmall(f"Fock index {n} outside resonator_dim {layout.resonator_dim}")
    v = np.zeros(layout.dim, dtype=complex)
    v[qubit * layout.resonator_dim + n] = 1.0
    return QuantumState(layout, v)


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Analytic <n|alpha> = exp(-|alpha|²/2) alpha^n / sqrt(n!), n < dim (not renormalized)."""
    n = np.arange(dim)
    r = abs(alpha)
    if r == 0:
        out = np.zeros(dim, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -0.5 * r * r + n * np.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent(alpha: complex, layout: HilbertLayout) -> QuantumState:
    """|alpha> (qubit in |g> if present), built as D(alpha)|0>."""
    D = displacement(alpha, layout.resonator_only())
    vec = D.matrix[:, 0]
    if layout.qubit_levels == 2:
        vec = np.concatenate([vec, np.zeros_like(vec)])
    return QuantumState(layout, vec / np.linalg.norm(vec))


def superposition(alphas, coeffs, layout: HilbertLayout) -> QuantumState:
    """Normalized Σ c_k |alpha_k> from analytic coherent amplitudes (resonator factor)."""
    vec = np.zeros(layout.resonator_dim, dtype=complex)
    for al, c in zip(alphas, coeffs):
        vec += c * coherent_amplitudes(al, layout.resonator_dim)
    if layout.qubit_levels == 2:
        vec = np.concatenate([vec, np.zeros_like(vec)])
    return QuantumState(layout, vec / np.linalg.norm(vec))


def reduce_to_resonator(state: QuantumState) -> QuantumState:
    """Partial trace over the qubit factor."""
    lay = state.layout
    if lay.qubit_levels == 1:
        return state
    d = lay.resonator_dim
    rho = state.density().reshape(2, d, 2, d)
    return QuantumState(lay.resonator_only(), np.einsum("qiqj->ij", rho), check=False)


def project_qubit(state: QuantumState, level: int):
    """Project the qubit on ``level``; returns (normalized resonator state, probability)."""
    lay = state.layout
    if lay.qubit_levels != 2:
        raise LayoutMismatch("layout has no qubit factor")
    d = lay.resonator_dim
    sl = slice(level * d, (level + 1) * d)
    if state.is_pure:
        part = state.data[sl]
        prob = float(np.vdot(part, part).real)
        if prob == 0.0:
            raise InvalidState("projection has zero probability")
        return QuantumState(lay.resonator_only(), part / np.sqrt(prob)), prob
    block = state.data[sl, sl]
    prob = float(np.trace(block).real)
    if prob == 0.0:
        raise InvalidState("projection has zero probability")
    return QuantumState(lay.resonator_only(), block / prob, check=False), prob


def photon_distribution(state: QuantumState) -> np.ndarray:
    """P(n) of the resonator, summed over the qubit."""
    rho = reduce_to_resonator(state)
    if rho.is_pure:
        return np.abs(rho.data) ** 2
    return np.real(np.diag(rho.data)).copy()


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    diff = np.asarray(rho1) - np.asarray(rho2)
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))
