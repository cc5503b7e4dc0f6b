"""Fermionic NARG for ab initio Hamiltonians supplied as FCIDUMP integrals.

Spatial orbitals are absorbed one at a time, each carrying the d = 4 local
states (|0>, |up>, |dn>, |updn>).  Anticommutation across orbitals is kept
by the Jordan-Wigner construction: every annihilation operator of orbital
p carries the parity string of all orbitals processed before it, so the
renormalized matrices stored on the block are exact Fock-space operators
(up to truncation) and products of them carry the correct fermionic signs
automatically.

When orbital w is added, every Hamiltonian term touching w is split into
(block part) x (site part).  Terms whose site part is diagonal in the
local occupation (density-density, on-site repulsion) enter the
per-configuration Hamiltonians H[sigma]; terms that change the occupation
of w (hopping, spin flips, pair transfer) enter the superblock through
overlap matrices dressed with the matching block operator.
"""

import itertools
import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .core import (
    BlockState,
    Coupling,
    OpTerm,
    ScaleSite,
    expectation_diag,
    initial_block,
    narg_step,
)
from .errors import (
    DegenerateDenominatorError,
    DimensionMismatchError,
    InvalidSizeError,
    MalformedHeaderError,
    MalformedLineError,
    TooLargeError,
)
from .numerics import eig_hermitian_lowest

FCI_MAX_SECTOR = 10000
_FCI_DENSE_MAX_DIM = 1200

# ---------------------------------------------------------------------------
# local site algebra: one spatial orbital, ordered basis (|0>, |up>, |dn>, |updn>)

_A2 = np.array([[0.0, 1.0], [0.0, 0.0]])
_Z2 = np.diag([1.0, -1.0])
_I2 = np.eye(2)


@dataclass(frozen=True, eq=False)
class FermionSite:
    """4x4 matrices of one orbital with the up-before-down sign convention."""

    c_up: np.ndarray
    c_dn: np.ndarray
    n_up: np.ndarray
    n_dn: np.ndarray
    parity: np.ndarray
    identity: np.ndarray

    def c(self, spin):
        return self.c_up if spin == 0 else self.c_dn

    def n(self, spin):
        return self.n_up if spin == 0 else self.n_dn


def _make_site() -> FermionSite:
    # basis index = 2 * n_dn + n_up; the down operator carries the on-site
    # string over the up mode so the pair anticommutes exactly
    c_up = np.kron(_I2, _A2)
    c_dn = np.kron(_A2, _Z2)
    return FermionSite(
        c_up=c_up,
        c_dn=c_dn,
        n_up=c_up.T @ c_up,
        n_dn=c_dn.T @ c_dn,
        parity=np.kron(_Z2, _Z2),
        identity=np.eye(4),
    )


SITE = _make_site()

# occupation and twice-spin-projection of each local state
_SITE_NUMBER = np.array([0.0, 1.0, 1.0, 2.0])
_SITE_SZ2 = np.array([0.0, 1.0, -1.0, 0.0])


# ---------------------------------------------------------------------------
# FCIDUMP data


@dataclass(frozen=True, eq=False)
class FcidumpData:
    """One- and two-electron integrals in chemist notation, fully expanded.

    ``t`` is the symmetric L x L core matrix, ``v[i, j, k, l]`` the chemist
    (ij|kl) repulsion tensor with all eight permutational images populated,
    both in hartree.  ``e_mean_field`` is filled when the file carries the
    optional ESCF header key.
    """

    n_orb: int
    n_elec: int
    ms2: int
    t: np.ndarray
    v: np.ndarray
    e_core: float
    e_mean_field: "float | None" = None

    def __post_init__(self):
        if self.t.shape != (self.n_orb, self.n_orb):
            raise DimensionMismatchError("one-body tensor shape mismatch")
        if self.v.shape != (self.n_orb,) * 4:
            raise DimensionMismatchError("two-body tensor shape mismatch")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.v))):
            raise ValueError("integrals contain NaN or Inf entries")
        if np.abs(self.t - self.t.T).max(initial=0.0) > 1e-12:
            raise ValueError("one-body integrals must be symmetric")
        for axes in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if np.abs(self.v - self.v.transpose(axes)).max(initial=0.0) > 1e-12:
                raise ValueError("two-body integrals must have chemist 8-fold symmetry")

    @property
    def n_up(self) -> int:
        return (self.n_elec + self.ms2) // 2

    @property
    def n_dn(self) -> int:
        return (self.n_elec - self.ms2) // 2


_CHEMIST_IMAGES = (
    (0, 1, 2, 3),
    (1, 0, 2, 3),
    (0, 1, 3, 2),
    (1, 0, 3, 2),
    (2, 3, 0, 1),
    (2, 3, 1, 0),
    (3, 2, 0, 1),
    (3, 2, 1, 0),
)


def _set_two_body(v, i, j, k, l, value):
    idx = (i, j, k, l)
    for perm in _CHEMIST_IMAGES:
        v[idx[perm[0]], idx[perm[1]], idx[perm[2]], idx[perm[3]]] = value


def parse_fcidump(source) -> FcidumpData:
    """Parse FCIDUMP text (string, open file, or path-like).

    The namelist header must define NORB and NELEC; MS2 defaults to 0 and
    an optional ESCF key supplies the mean-field energy.  Data lines are
    ``value i j k l`` with 1-based indices: (i j 0 0) one-body, (0 0 0 0)
    core energy, (i 0 0 0) orbital energies (ignored), anything else the
    chemist two-body integral (ij|kl).  Fortran D exponents are accepted.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
        if "\n" not in text and not text.lstrip().startswith("&"):
            with open(text) as fh:
                text = fh.read()
    lines = text.splitlines()

    header_lines = []
    body_start = None
    for ln, line in enumerate(lines):
        stripped = line.strip()
        header_lines.append(stripped)
        if re.search(r"(&END|/|\$END)\s*$", stripped, flags=re.IGNORECASE):
            body_start = ln + 1
            break
    if body_start is None:
        raise MalformedHeaderError("no namelist terminator (&END or /) found")
    header = " ".join(header_lines)
    if not header.lstrip().upper().startswith("&FCI"):
        raise MalformedHeaderError("header does not start with &FCI")

    def header_int(key, default=None):
        m = re.search(rf"\b{key}\s*=\s*([-+]?\d+)", header, flags=re.IGNORECASE)
        if m:
            return int(m.group(1))
        if default is None:
            raise MalformedHeaderError(f"missing {key} in header")
        return default

    n_orb = header_int("NORB")
    n_elec = header_int("NELEC")
    ms2 = header_int("MS2", 0)
    e_mean_field = None
    m = re.search(
        r"\bESCF\s*=\s*([-+]?[\d.]+(?:[eEdD][-+]?\d+)?)", header, flags=re.IGNORECASE
    )
    if m:
        e_mean_field = float(m.group(1).replace("d", "e").replace("D", "E"))
    if n_orb < 1:
        raise MalformedHeaderError(f"NORB must be positive, got {n_orb}")

    t = np.zeros((n_orb, n_orb))
    v = np.zeros((n_orb,) * 4)
    e_core = 0.0
    for ln in range(body_start, len(lines)):
        fields = lines[ln].split()
        if not fields:
            continue
        if len(fields) != 5:
            raise MalformedLineError(f"line {ln + 1}: expected 5 fields, got {len(fields)}")
        try:
            value = float(fields[0].replace("d", "e").replace("D", "E"))
            i, j, k, l = (int(f) for f in fields[1:])
        except ValueError as exc:
            raise MalformedLineError(f"line {ln + 1}: {exc}") from None
        for idx in (i, j, k, l):
            if idx < 0 or idx > n_orb:
                raise MalformedLineError(
                    f"line {ln + 1}: orbital index {idx} outside 1..{n_orb}"
                )
        if i == j == k == l == 0:
            e_core = value
        elif k == 0 and l == 0 and i > 0 and j > 0:
            t[i - 1, j - 1] = value
            t[j - 1, i - 1] = value
        elif j == 0 and k == 0 and l == 0 and i > 0:
            continue  # orbital-energy record, not part of the Hamiltonian
        elif min(i, j, k, l) > 0:
            _set_two_body(v, i - 1, j - 1, k - 1, l - 1, value)
        else:
            raise MalformedLineError(f"line {ln + 1}: unsupported index pattern {i} {j} {k} {l}")
    return FcidumpData(
        n_orb=n_orb, n_elec=n_elec, ms2=ms2, t=t, v=v, e_core=e_core,
        e_mean_field=e_mean_field,
    )


def dump_fcidump(data: FcidumpData, path_or_stream) -> None:
    """Write integrals in FCIDUMP text form (canonical unique entries only)."""
    L = data.n_orb
    lines = [f"&FCI NORB={L},NELEC={data.n_elec},MS2={data.ms2},"]
    if data.e_mean_field is not None:
        lines.append(f" ESCF={data.e_mean_field!r},")
    lines.append("&END")
    seen = set()
    for i in range(L):
        for j in range(i + 1):
            for k in range(L):
                for l in range(k + 1):
                    if (i, j) < (k, l) or (i, j, k, l) in seen:
                        continue
                    seen.add((i, j, k, l))
                    val = float(data.v[i, j, k, l])
                    if val != 0.0:
                        lines.append(f"{val!r} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(L):
        for j in range(i + 1):
            if data.t[i, j] != 0.0:
                lines.append(f"{float(data.t[i, j])!r} {i + 1} {j + 1} 0 0")
    lines.append(f"{float(data.e_core)!r} 0 0 0 0")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(text)
    else:
        with open(path_or_stream, "w") as fh:
            fh.write(text)


def hubbard_fixture(L: int, t_hop: float = 1.0, u: float = 0.0) -> FcidumpData:
    """Open Hubbard chain as integrals: -t_hop hopping, on-site repulsion u."""
    if L < 2:
        raise InvalidSizeError(f"need at least 2 sites, got {L}")
    t = np.zeros((L, L))
    for i in range(L - 1):
        t[i, i + 1] = t[i + 1, i] = -t_hop
    v = np.zeros((L,) * 4)
    for i in range(L):
        v[i, i, i, i] = u
    return FcidumpData(n_orb=L, n_elec=L, ms2=L % 2, t=t, v=v, e_core=0.0)


def order_orbitals(data: FcidumpData, mode: str = "given") -> np.ndarray:
    """Processing permutation: 'given' keeps the file order (core orbitals
    first by convention), 'reversed' flips it."""
    if mode == "given":
        return np.arange(data.n_orb)
    if mode == "reversed":
        return np.arange(data.n_orb)[::-1].copy()
    raise ValueError(f"unknown ordering mode {mode!r}")


def permute_orbitals(data: FcidumpData, perm) -> FcidumpData:
    """Relabel orbitals so that new index p is old index perm[p]."""
    perm = np.asarray(perm)
    t = data.t[np.ix_(perm, perm)]
    v = data.v[np.ix_(perm, perm, perm, perm)]
    return FcidumpData(
        n_orb=data.n_orb, n_elec=data.n_elec, ms2=data.ms2, t=t, v=v,
        e_core=data.e_core, e_mean_field=data.e_mean_field,
    )


def rotate_orbitals(data: FcidumpData, coeffs) -> FcidumpData:
    """Transform the integrals into the orbital basis given by the columns
    of ``coeffs`` (an orthogonal L x L matrix)."""
    c = np.asarray(coeffs, dtype=float)
    t = c.T @ data.t @ c
    v = np.einsum("ijkl,ip,jq,kr,ls->pqrs", data.v, c, c, c, c, optimize=True)
    return FcidumpData(
        n_orb=data.n_orb, n_elec=data.n_elec, ms2=data.ms2, t=t, v=v,
        e_core=data.e_core, e_mean_field=data.e_mean_field,
    )


def one_body_orbitals(data: FcidumpData):
    """Eigenbasis of the one-body matrix, ascending (most bound first)."""
    eps, c = np.linalg.eigh(data.t)
    return eps, c


def slater_determinant_energy(data: FcidumpData, occ_up, occ_dn) -> float:
    """<det|H|det> for the determinant occupying the given spatial orbitals."""
    occ_up = list(occ_up)
    occ_dn = list(occ_dn)
    e = data.e_core
    for p in occ_up + occ_dn:
        e += data.t[p, p]
    for same in (occ_up, occ_dn):
        for p in same:
            for q in same:
                e += 0.5 * (data.v[p, p, q, q] - data.v[p, q, q, p])
    for p in occ_up:
        for q in occ_dn:
            e += data.v[p, p, q, q]
    return float(e)


def correlation_fraction(e_narg: float, e_mean_field: float, e_fci: float) -> float:
    """Share of the correlation energy captured: (E_mf - E) / (E_mf - E_fci)."""
    denom = e_mean_field - e_fci
    if abs(denom) < 1e-12:
        raise DegenerateDenominatorError(
            "mean-field and FCI energies coincide; fraction undefined"
        )
    return (e_mean_field - e_narg) / denom


# ---------------------------------------------------------------------------
# full Fock space via the Jordan-Wigner chain (small orbital counts)


def fock_operators(n_orb: int) -> "dict[tuple[int, int], np.ndarray]":
    """Annihilation matrices on the 4^n Fock space, keyed by (orbital, spin).

    Orbital p carries the parity string of orbitals 0..p-1, so the returned
    matrices satisfy the fermionic anticommutation relations exactly.
    """
    ops = {}
    for p in range(n_orb):
        for spin in (0, 1):
            factors = [SITE.parity] * p + [SITE.c(spin)] + [SITE.identity] * (n_orb - p - 1)
            m = factors[0]
            for f in factors[1:]:
                m = np.kron(m, f)
            ops[(p, spin)] = m
    return ops


def fock_hamiltonian(t, v, e_const: float = 0.0) -> np.ndarray:
    """Dense Fock-space Hamiltonian of the given integrals (all sectors).

    Uses H = sum t~_il E_il + 1/2 sum_ij E_ij W_ij with
    E_ij = sum_s c+_is c_js, W_ij = sum_kl v_ijkl E_kl and
    t~ = t - 1/2 sum_j v_ijjl, which is the normal-ordering identity for the
    chemist integral convention.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    L = t.shape[0]
    ops = fock_operators(L)
    dim = 4**L
    e_stack = np.empty((L, L, dim, dim))
    for i in range(L):
        for j in range(L):
            e_stack[i, j] = sum(
                ops[(i, s)].conj().T @ ops[(j, s)] for s in (0, 1)
            )
    t_eff = t - 0.5 * np.einsum("ijjl->il", v)
    h = np.einsum("il,ilab->ab", t_eff, e_stack)
    w = np.tensordot(v.reshape(L * L, L * L), e_stack.reshape(L * L, dim, dim), axes=1)
    w = w.reshape(L, L, dim, dim)
    for i in range(L):
        for j in range(L):
            h += 0.5 * e_stack[i, j] @ w[i, j]
    if e_const:
        h[np.diag_indices_from(h)] += e_const
    return h


def _fock_site_diag_sum(n_orb, values):
    n = np.zeros(4**n_orb)
    for p in range(n_orb):
        before, after = 4**p, 4 ** (n_orb - p - 1)
        n += np.kron(np.ones(before), np.kron(values, np.ones(after)))
    return np.diag(n)


def fock_number_operator(n_orb: int) -> np.ndarray:
    """Total electron number on the 4^n Fock space."""
    return _fock_site_diag_sum(n_orb, _SITE_NUMBER)


def fock_sz2_operator(n_orb: int) -> np.ndarray:
    """Twice the total spin projection on the 4^n Fock space."""
    return _fock_site_diag_sum(n_orb, _SITE_SZ2)


# ---------------------------------------------------------------------------
# determinant-basis FCI oracle (Slater-Condon through single excitations)


def _sector_singles(n_orb, n_occ):
    """Sparse c+_p c_q on the fixed-particle-number string basis, all (p, q)."""
    strings = list(itertools.combinations(range(n_orb), n_occ))
    index = {s: i for i, s in enumerate(strings)}
    dim = len(strings)
    singles = {}
    for p in range(n_orb):
        for q in range(n_orb):
            rows, cols, vals = [], [], []
            for col, s in enumerate(strings):
                if q not in s:
                    continue
                sign = (-1) ** s.index(q)
                rest = tuple(o for o in s if o != q)
                if p in rest:
                    continue
                pos = sum(1 for o in rest if o < p)
                new = rest[:pos] + (p,) + rest[pos:]
                rows.append(index[new])
                cols.append(col)
                vals.append(sign * (-1) ** pos)
            singles[(p, q)] = scipy.sparse.csr_matrix(
                (vals, (rows, cols)), shape=(dim, dim)
            )
    return strings, singles


def fci_sector_hamiltonian(data: FcidumpData, n_up: int, n_dn: int):
    """Sparse Hamiltonian in the fixed (n_up, n_dn) determinant basis."""
    L = data.n_orb
    _, up = _sector_singles(L, n_up)
    _, dn = _sector_singles(L, n_dn)
    dim_up = up[(0, 0)].shape[0] if up else 1
    dim_dn = dn[(0, 0)].shape[0] if dn else 1
    i_up = scipy.sparse.identity(dim_up, format="csr")
    i_dn = scipy.sparse.identity(dim_dn, format="csr")
    e = {}
    for p in range(L):
        for q in range(L):
            e[(p, q)] = (
                scipy.sparse.kron(up[(p, q)], i_dn) + scipy.sparse.kron(i_up, dn[(p, q)])
            ).tocsr()
    t_eff = data.t - 0.5 * np.einsum("ijjl->il", data.v)
    dim = dim_up * dim_dn
    h = scipy.sparse.csr_matrix((dim, dim))
    for i in range(L):
        for l in range(L):
            if t_eff[i, l] != 0.0:
                h = h + t_eff[i, l] * e[(i, l)]
    for i in range(L):
        for j in range(L):
            w = scipy.sparse.csr_matrix((dim, dim))
            nonzero = False
            for k in range(L):
                for l in range(L):
                    if data.v[i, j, k, l] != 0.0:
                        w = w + data.v[i, j, k, l] * e[(k, l)]
                        nonzero = True
            if nonzero:
                h = h + 0.5 * (e[(i, j)] @ w)
    return h.tocsr()


def fci_oracle(
    data: FcidumpData,
    n_up: "int | None" = None,
    n_dn: "int | None" = None,
    n_levels: int = 1,
) -> np.ndarray:
    """Lowest eigenvalues (plus core energy) in a fixed determinant sector."""
    n_up = data.n_up if n_up is None else n_up
    n_dn = data.n_dn if n_dn is None else n_dn
    L = data.n_orb
    dim = _binom(L, n_up) * _binom(L, n_dn)
    if dim > FCI_MAX_SECTOR:
        raise TooLargeError(f"determinant sector dimension {dim} exceeds {FCI_MAX_SECTOR}")
    h = fci_sector_hamiltonian(data, n_up, n_dn)
    n_levels = min(n_levels, dim)
    if dim <= _FCI_DENSE_MAX_DIM or n_levels >= dim - 1:
        vals = eig_hermitian_lowest(h.toarray(), n_levels).values
    else:
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        vals = scipy.sparse.linalg.eigsh(
            h, k=min(dim - 2, n_levels + 8), which="SA", v0=v0, tol=1e-12,
            return_eigenvectors=False,
        )
        vals = np.sort(vals)[:n_levels]
    return vals + data.e_core


def _binom(n, k):
    from math import comb

    return comb(n, k)


# ---------------------------------------------------------------------------
# block growing


def _split_term(ops, w):
    """Separate an ordered elementary-operator product into block and site
    parts, with the fermionic sign of the reordering."""
    block_key, site_key = [], []
    site_seen = 0
    sign = 1
    for orb, spin, dag in ops:
        if orb == w:
            site_key.append((spin, dag))
            site_seen += 1
        else:
            if site_seen % 2 == 1:
                sign = -sign
            block_key.append((orb, spin, dag))
    return sign, tuple(block_key), tuple(site_key)


def _site_matrix(site_key):
    m = np.eye(4)
    for spin, dag in site_key:
        c = SITE.c(spin)
        m = m @ (c.conj().T if dag else c)
    return m


def _dagger_key(site_key):
    return tuple((spin, not dag) for spin, dag in reversed(site_key))


class _BlockProducts:
    """Memoized products of renormalized elementary block operators."""

    def __init__(self, block_ops):
        self._ops = block_ops
        self._elem = {}
        self._pair = {}

    def elem(self, key):
        if key not in self._elem:
            orb, spin, dag = key
            m = self._ops[f"c_{orb}{'ud'[spin]}"]
            self._elem[key] = m.conj().T if dag else m
        return self._elem[key]

    def pair(self, k1, k2):
        key = (k1, k2)
        if key not in self._pair:
            self._pair[key] = self.elem(k1) @ self.elem(k2)
        return self._pair[key]

    def accumulate(self, terms, dim):
        """sum_key coeff * product(key) for a dict of block keys."""
        acc = np.zeros((dim, dim))
        triples = {}
        for key, coeff in terms.items():
            if len(key) == 0:
                acc[np.diag_indices_from(acc)] += coeff
            elif len(key) == 1:
                acc += coeff * self.elem(key[0])
            elif len(key) == 2:
                acc += coeff * self.pair(key[0], key[1])
            else:
                # factor sum_{k0} elem(k0) @ (sum of weighted suffix pairs)
                triples.setdefault(key[0], []).append((coeff, key[1], key[2]))
        for k0, entries in triples.items():
            inner = np.zeros((dim, dim))
            for coeff, k1, k2 in entries:
                inner += coeff * self.pair(k1, k2)
            acc += self.elem(k0) @ inner
        return acc


def _enumerate_terms(t, v, w):
    """All Hamiltonian terms that touch orbital w, against orbitals 0..w."""
    terms = []
    for p in range(w + 1):
        for q in range(w + 1):
            if p != w and q != w:
                continue
            if t[p, q] == 0.0:
                continue
            for s in (0, 1):
                terms.append((t[p, q], ((p, s, True), (q, s, False))))
    rng = range(w + 1)
    for i in rng:
        for j in rng:
            for k in rng:
                for l in rng:
                    if w not in (i, j, k, l):
                        continue
                    coeff = 0.5 * v[i, j, k, l]
                    if coeff == 0.0:
                        continue
                    for s in (0, 1):
                        for tt in (0, 1):
                            terms.append(
                                (coeff, ((i, s, True), (k, tt, True), (l, tt, False), (j, s, False)))
                            )
    return terms


def _grow_site(data: FcidumpData, w: int, block: BlockState, needed_ops):
    """ScaleSite for orbital w plus the operator specs the next step needs."""
    products = _BlockProducts(block.renormalized_ops)
    dim = block.dim
    parity = block.renormalized_ops["parity"]

    site_energy = np.zeros(4)
    diag_terms = {}  # block key -> per-state coefficient vector
    offdiag_terms = {}  # site key -> {block key -> coeff}
    for coeff, ops in _enumerate_terms(data.t, data.v, w):
        sign, block_key, site_key = _split_term(ops, w)
        m_site = _site_matrix(site_key)
        if not m_site.any():
            continue
        weight = sign * coeff
        diag = np.diag(m_site)
        if np.array_equal(m_site, np.diag(diag)):
            if block_key:
                vec = diag_terms.setdefault(block_key, np.zeros(4))
                vec += weight * diag
            else:
                site_energy += weight * diag
        else:
            bucket = offdiag_terms.setdefault(site_key, {})
            bucket[block_key] = bucket.get(block_key, 0.0) + weight

    # per-configuration block matrices, one per occupied-state slot
    per_state = np.zeros((4, dim, dim))
    touched = np.zeros(4, dtype=bool)
    for block_key, vec in diag_terms.items():
        mat = products.accumulate({block_key: 1.0}, dim)
        for sigma in range(4):
            if vec[sigma] != 0.0:
                per_state[sigma] += vec[sigma] * mat
                touched[sigma] = True
    diagonal_block_terms = []
    for sigma in range(4):
        if touched[sigma]:
            one_hot = np.zeros(4)
            one_hot[sigma] = 1.0
            diagonal_block_terms.append((one_hot, per_state[sigma]))

    # each occupation-changing pattern pairs with its reversed-daggered
    # partner; emitting only the canonical one and letting the assembly add
    # the exact matrix adjoint keeps the superblock Hermitian even when
    # truncated operator products no longer anticommute exactly
    couplings = []
    emitted = set()
    for site_key, bucket in offdiag_terms.items():
        if site_key in emitted:
            continue
        partner = _dagger_key(site_key)
        m_block = products.accumulate(bucket, dim)
        if len(site_key) % 2 == 1:
            m_block = m_block @ parity
        if partner in offdiag_terms and partner != site_key:
            emitted.add(site_key)
            emitted.add(partner)
            couplings.append(
                Coupling(site=_site_matrix(site_key), block=m_block, add_conjugate=True)
            )
        else:
            emitted.add(site_key)
            couplings.append(Coupling(site=_site_matrix(site_key), block=m_block))

    site = ScaleSite(
        n_config=4,
        diagonal_energy=site_energy,
        diagonal_block_terms=diagonal_block_terms,
        offdiag_couplings=couplings,
        label=f"orbital{w}",
    )

    specs = {}
    for p, spin in needed_ops:
        name = f"c_{p}{'ud'[spin]}"
        if p == w:
            specs[name] = OpTerm(site=SITE.c(spin), block="parity")
        else:
            specs[name] = OpTerm(block=name)
    specs["parity"] = OpTerm(site=np.diag(SITE.parity).copy(), block="parity")
    specs["number"] = [
        OpTerm(block="number"),
        OpTerm(site=_SITE_NUMBER.copy()),
    ]
    specs["sz2"] = [
        OpTerm(block="sz2"),
        OpTerm(site=_SITE_SZ2.copy()),
    ]
    return site, specs


def _touch_matrix(data: FcidumpData) -> np.ndarray:
    """touch[a, b] marks orbital pairs joined by any Hamiltonian term."""
    L = data.n_orb
    touch = data.t != 0.0
    nz = np.argwhere(data.v != 0.0)
    for idx in nz:
        for a in idx:
            for b in idx:
                touch[a, b] = True
    return touch | touch.T | np.eye(L, dtype=bool)


def _resolve_sector_labels(energies, number_mat, sz2_mat, n_orb, tol=1e-8):
    """Sector labels per retained state, resolved inside degenerate clusters.

    Eigenvectors returned for a degenerate level can mix particle-number
    sectors; rotating each near-degenerate cluster into the joint eigenbasis
    of (number, 2Sz) recovers sharp labels without touching the energies
    beyond the cluster width.
    """
    e = np.asarray(energies, dtype=float)
    n_lab = np.real(np.diag(number_mat)).copy()
    sz_lab = np.real(np.diag(sz2_mat)).copy()
    e_out = e.copy()
    # separating weight making the joint (N, 2Sz) spectrum non-degenerate
    alpha = 4 * n_orb + 3
    i = 0
    size = e.shape[0]
    while i < size:
        j = i + 1
        while j < size and e[j] - e[j - 1] <= tol * max(1.0, abs(e[j])):
            j += 1
        if j - i > 1:
            sl = slice(i, j)
            joint = alpha * number_mat[sl, sl] + sz2_mat[sl, sl]
            joint = 0.5 * (joint + joint.conj().T)
            _, w = np.linalg.eigh(joint)
            n_lab[sl] = np.real(np.diag(w.conj().T @ number_mat[sl, sl] @ w))
            sz_lab[sl] = np.real(np.diag(w.conj().T @ sz2_mat[sl, sl] @ w))
            e_out[sl] = np.real(np.diag(w.conj().T @ np.diag(e[sl]) @ w))
        i = j
    return e_out, n_lab, sz_lab


@dataclass(frozen=True, eq=False)
class QchemResult:
    """Sector-resolved output of a block-growing run.

    ``energies`` are the lowest levels whose electron-number and
    spin-projection expectations round to the declared (NELEC, MS2), core
    energy included.  ``all_energies``, ``number_expectations`` and
    ``sz2_expectations`` cover every retained final state for diagnostics:
    truncation is never sector-restricted, so states of other particle
    numbers appear in the spectrum and are simply reported.
    """

    energies: np.ndarray
    all_energies: np.ndarray
    number_expectations: np.ndarray
    sz2_expectations: np.ndarray
    block: BlockState
    l_init: int

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def log(self):
        return self.block.log


def default_l_init(d_retain: "int | None", n_orb: int) -> int:
    """Smallest exactly-diagonalized orbital count with 4^l >= d_retain."""
    if d_retain is None:
        return 1
    l = 1
    while 4**l < d_retain and l < n_orb - 1:
        l += 1
    return l


def grow_block(
    data: FcidumpData,
    d_retain: "int | None" = None,
    l_init: "int | None" = None,
    n_levels: int = 1,
    close_multiplets: bool = False,
    log_assembly: bool = False,
) -> QchemResult:
    """Absorb orbitals one at a time in the given order.

    Starts from exact diagonalization of the first ``l_init`` orbitals
    (default: the smallest count whose Fock space already reaches
    ``d_retain``), then adds one orbital per step, keeping ``d_retain``
    superblock states.  ``d_retain=None`` keeps everything (exact,
    exponential).  The reported energies are filtered to the electron
    number declared by ``data`` through the renormalized number operator;
    truncation itself never restricts the sector.
    """
    L = data.n_orb
    full = d_retain is None
    if l_init is None:
        l_init = default_l_init(d_retain, L)
    if not 1 <= l_init <= max(L - 1, 1):
        raise InvalidSizeError(f"l_init={l_init} out of range for {L} orbitals")
    if L == 1:
        l_init = 1

    touch = _touch_matrix(data)
    ops = fock_operators(l_init)
    named = {f"c_{p}{'ud'[s]}": ops[(p, s)] for p in range(l_init) for s in (0, 1)}
    parity = np.eye(1)
    for _ in range(l_init):
        parity = np.kron(parity, SITE.parity)
    named["parity"] = parity
    named["number"] = fock_number_operator(l_init)
    named["sz2"] = fock_sz2_operator(l_init)
    h0 = fock_hamiltonian(
        data.t[:l_init, :l_init], data.v[:l_init, :l_init, :l_init, :l_init]
    )
    block = initial_block(
        h0,
        operators=named,
        d_retain=None if full else min(d_retain, 4**l_init),
        close_multiplets=close_multiplets,
    )

    for w in range(l_init, L - 1):
        needed = [
            (p, s)
            for p in range(w + 1)
            if touch[p, w + 1 :].any()
            for s in (0, 1)
        ]
        site, specs = _grow_site(data, w, block, needed)
        keep = None if full else min(d_retain, 4 * block.dim)
        block = narg_step(
            block,
            site,
            d_adiabatic=None,
            d_retain=keep,
            op_specs=specs,
            close_multiplets=close_multiplets,
            log_assembly=log_assembly,
        )

    # final orbital: nothing couples beyond it, so only the sector
    # bookkeeping operators are renormalized; if the declared sector does
    # not appear among the lowest retained states, widen the readout window
    # before giving up (truncation never restricts the sector, so states of
    # other particle numbers may crowd the bottom of the spectrum)
    if L > l_init:
        site, specs = _grow_site(data, L - 1, block, [])
        dim_super = 4 * block.dim
        keep = min(dim_super, max(48, 4 * n_levels, 0 if full else d_retain))
        while True:
            final = narg_step(
                block,
                site,
                d_adiabatic=None,
                d_retain=keep,
                op_specs=specs,
                close_multiplets=close_multiplets,
                log_assembly=log_assembly,
            )
            readout = _sector_readout(final, data, n_levels)
            if readout is not None or keep == dim_super:
                break
            keep = min(dim_super, 8 * keep)
    else:
        final = block
        readout = _sector_readout(final, data, n_levels)
    if readout is None:
        number = expectation_diag(final, "number")
        raise ValueError(
            f"no retained state matches N={data.n_elec}, 2Sz={data.ms2}; "
            f"number expectations span [{number.min():.3f}, {number.max():.3f}]"
        )
    energies, all_energies, number, sz2 = readout
    return QchemResult(
        energies=energies,
        all_energies=all_energies,
        number_expectations=number,
        sz2_expectations=sz2,
        block=final,
        l_init=l_init,
    )


def _sector_readout(block: BlockState, data: FcidumpData, n_levels: int):
    """Energies of the declared (NELEC, MS2) sector, or None if absent."""
    resolved, number, sz2 = _resolve_sector_labels(
        block.energies,
        block.renormalized_ops["number"],
        block.renormalized_ops["sz2"],
        data.n_orb,
    )
    order = np.argsort(resolved, kind="stable")
    all_energies = resolved[order] + data.e_core
    number = number[order]
    sz2 = sz2[order]
    in_sector = (np.round(number).astype(int) == data.n_elec) & (
        np.round(sz2).astype(int) == data.ms2
    )
    if not in_sector.any():
        return None
    return all_energies[in_sector][:n_levels], all_energies, number, sz2
