"""Dense operator and state algebra for N-qubit registers.

Conventions used throughout the package (see README):

* Basis states are labelled by big-endian bitstrings: qubit 1 is the most
  significant bit, so for two qubits the basis order is |00>, |01>, |10>, |11>.
* The excited state of a qubit is |1>, and the Pauli-Z operator follows the
  energy convention Z|1> = +|1>, Z|0> = -|0>, i.e. Z = diag(-1, +1) on a
  single site.  With H0 = sum_a w_a Z_a / 2 the fully inverted register then
  has maximal energy and emits during decay.
* The lowering operator Pi = |0><1| destroys one excitation; Pi^dag Pi
  projects onto the excited state, Pi^dag Pi = (1 + Z)/2.

Everything here is a plain complex numpy array; functions are pure and the
returned arrays can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 12

_SIGMA = {
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    # Energy convention: Z|0> = -|0>, Z|1> = +|1>.
    "Z": np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex),
}

# |0><1| in the (|0>, |1>) basis: destroys the excitation.
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class RegisterConfig:
    """Qubit count and frequencies, the data of H0 = sum_a w_a Z_a / 2."""

    n: int
    frequencies: tuple[float, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"register needs at least one qubit, got n={self.n}")
        if self.n > MAX_QUBITS:
            raise ValueError(
                f"dense simulation capped at {MAX_QUBITS} qubits, got n={self.n}"
            )
        freqs = tuple(float(w) for w in self.frequencies)
        if len(freqs) != self.n:
            raise ValueError(
                f"got {len(freqs)} frequencies for {self.n} qubits"
            )
        if any(w <= 0 for w in freqs):
            raise ValueError(f"qubit frequencies must be positive: {freqs}")
        object.__setattr__(self, "frequencies", freqs)

    @classmethod
    def uniform(cls, n: int, omega0: float = 1.0) -> "RegisterConfig":
        return cls(n=n, frequencies=(float(omega0),) * n)

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def is_uniform(self) -> bool:
        return len(set(self.frequencies)) == 1

    def omega(self, site: int) -> float:
        """Frequency of qubit `site` (1-based)."""
        _check_site(site, self.n)
        return self.frequencies[site - 1]


def _check_site(site: int, n: int) -> None:
    if n < 1 or n > MAX_QUBITS:
        raise ValueError(f"qubit count must be in 1..{MAX_QUBITS}, got {n}")
    if site < 1 or site > n:
        raise ValueError(f"site {site} out of range for {n} qubits")


def _embed(op2: np.ndarray, site: int, n: int) -> np.ndarray:
    """Embed a single-qubit operator at `site` (1-based, MSB = site 1)."""
    left = 2 ** (site - 1)
    right = 2 ** (n - site)
    out = np.kron(np.kron(np.eye(left, dtype=complex), op2), np.eye(right, dtype=complex))
    return out


def pauli(axis: str, site: int, n: int) -> np.ndarray:
    """Pauli operator on one qubit of an n-qubit register.

    Note the package-wide sign convention Z = diag(-1, +1) (excited |1> has
    eigenvalue +1); X and Y are the standard matrices.
    """
    _check_site(site, n)
    try:
        sig = _SIGMA[axis.upper()]
    except KeyError:
        raise ValueError(f"axis must be X, Y or Z, got {axis!r}") from None
    return _embed(sig, site, n)


def ladder(site: int, n: int, kind: str = "lowering") -> np.ndarray:
    """Raising/lowering operator: lowering = |0><1| at `site`, raising its adjoint.

    lowering |1> = |0>, lowering |0> = 0; raising.lowering = (1 + Z)/2
    projects onto the excited state.
    """
    _check_site(site, n)
    if kind == "lowering":
        return _embed(_LOWER, site, n)
    if kind == "raising":
        return _embed(_LOWER.conj().T, site, n)
    raise ValueError(f"kind must be 'raising' or 'lowering', got {kind!r}")


def bitstring_index(bits) -> int:
    """Matrix index of basis state |l> for big-endian bits (qubit 1 first)."""
    idx = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bits must be 0/1, got {bits}")
        idx = (idx << 1) | int(b)
    return idx


def index_bits(index: int, n: int) -> tuple[int, ...]:
    """Inverse of bitstring_index."""
    return tuple((index >> (n - 1 - a)) & 1 for a in range(n))


def complement(bits) -> tuple[int, ...]:
    return tuple(1 - int(b) for b in bits)


def excess(bits) -> int:
    """Number of 1s minus number of 0s."""
    bits = tuple(int(b) for b in bits)
    return 2 * sum(bits) - len(bits)


def parse_bitstring(l, n: int | None = None) -> tuple[int, ...]:
    """Accept '0110', (0,1,1,0) or [0,1,1,0]; validate length if n given."""
    if isinstance(l, str):
        if not set(l) <= {"0", "1"}:
            raise ValueError(f"bitstring must contain only 0/1, got {l!r}")
        bits = tuple(int(c) for c in l)
    else:
        bits = tuple(int(b) for b in l)
        if not set(bits) <= {0, 1}:
            raise ValueError(f"bitstring must contain only 0/1, got {l!r}")
    if n is not None and len(bits) != n:
        raise ValueError(f"bitstring length {len(bits)} != register size {n}")
    return bits


def num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def basis_state(bits, n: int | None = None) -> np.ndarray:
    bits = parse_bitstring(bits, n)
    dim = 2 ** len(bits)
    psi = np.zeros(dim, dtype=complex)
    psi[bitstring_index(bits)] = 1.0
    return psi


def initial_state(kind, n: int) -> np.ndarray:
    """Standard initial density matrices.

    kind: 'ground', 'inverted', 'plus_all', 'ghz', or a bitstring for a
    computational basis state.
    """
    if n < 1 or n > MAX_QUBITS:
        raise ValueError(f"qubit count must be in 1..{MAX_QUBITS}, got {n}")
    dim = 2 ** n
    if kind == "ground":
        psi = basis_state((0,) * n)
    elif kind == "inverted":
        psi = basis_state((1,) * n)
    elif kind == "plus_all":
        psi = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    elif kind == "ghz":
        psi = np.zeros(dim, dtype=complex)
        psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    else:
        psi = basis_state(parse_bitstring(kind, n))
    return np.outer(psi, psi.conj())


def anti_diagonal_element(rho: np.ndarray, l) -> complex:
    """rho_{lbar, l} = <lbar| rho |l> for bitstring l and its complement lbar."""
    n = num_qubits(rho.shape[0])
    bits = parse_bitstring(l, n)
    return complex(rho[bitstring_index(complement(bits)), bitstring_index(bits)])


def cluster_by_excess(rho: np.ndarray) -> dict[int, complex]:
    """Sum anti-diagonal elements rho_{lbar,l} grouped by k = (#1s - #0s) of l.

    Returns every k in {-N, -N+2, ..., N}; keys with no bitstrings of that
    excess never occur (odd N has no k = 0 entry, for example).
    """
    n = num_qubits(rho.shape[0])
    dim = rho.shape[0]
    out: dict[int, complex] = {k: 0.0 + 0.0j for k in range(-n, n + 1, 2)}
    flipped = dim - 1 - np.arange(dim)  # index of the complement bitstring
    anti = rho[flipped, np.arange(dim)]
    pop = np.array([bin(i).count("1") for i in range(dim)])
    for idx in range(dim):
        out[2 * int(pop[idx]) - n] += complex(anti[idx])
    return out


def check_density_matrix(rho: np.ndarray, trace_tol: float = 1e-10,
                         herm_tol: float = 1e-12, eig_tol: float = 1e-8) -> None:
    """Raise if rho is not a valid density matrix (used on initial states)."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    num_qubits(rho.shape[0])
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError(f"trace deviates from 1 by {abs(np.trace(rho) - 1.0):.3e}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {w.min():.3e}")


def random_density_matrix(n: int, rng=None, rank: int | None = None) -> np.ndarray:
    """Random full-rank density matrix (Ginibre ensemble), for tests."""
    rng = np.random.default_rng(rng)
    dim = 2 ** n
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def pauli_stack(axis: str, n: int) -> np.ndarray:
    """(n, 2^n, 2^n) array of the given Pauli on every site."""
    return np.stack([pauli(axis, s, n) for s in range(1, n + 1)])


def ladder_stack(n: int, kind: str) -> np.ndarray:
    return np.stack([ladder(s, n, kind) for s in range(1, n + 1)])
