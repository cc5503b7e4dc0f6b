"""Generic nonadiabatic renormalization group engine.

The engine grows a many-body eigenbasis one energy scale at a time.  A
:class:`BlockState` holds the retained eigenstates of everything processed
so far, together with the operators of those scales expressed in the
retained basis.  A :class:`ScaleSite` describes the degree of freedom being
added: its configuration grid (DVR points for a continuous mode, local
occupation states for a fermionic orbital), the bare energy of each
configuration, the couplings that are diagonal in the configuration (they
enter the per-configuration "adiabatic" Hamiltonians) and the couplings
that move between configurations (they enter the superblock through
overlap matrices dressed with block operators).

One step:

1. for every configuration n, diagonalize
       H[n] = diag(block.energies) + sum_t g_t(n) * O_t + E_site(n) * 1
   and keep the lowest ``d_adiabatic`` states (the conditional eigenstates
   of the fast scales at a frozen slow configuration);
2. dress each coupling operator O with the resulting rotations,
       A(m, n) = C(m)^dag O C(n);
3. assemble the superblock
       H[(m, b), (n, a)] = sum_c o_c[m, n] A_c(m, n)[b, a]
                           + E[n, a] delta_mn delta_ba,
   diagonalize it and keep the lowest ``d_retain`` states;
4. rotate every operator the remaining scales will couple to into the new
   retained basis.

Without truncation the step is an exact change of basis, so the final
spectrum equals direct-product exact diagonalization; with truncation each
retained level is a variational (Rayleigh-Ritz) upper bound.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    IncompleteLogError,
    MissingOperatorError,
    NonHermitianResultError,
    UnknownOperatorError,
)
from .numerics import (
    DEGENERACY_GAP,
    EigenPairs,
    eig_hermitian,
    eig_hermitian_lowest,
    truncate_low,
)

HERMITICITY_ATOL = 1e-10


@dataclass(frozen=True, eq=False)
class Coupling:
    """One configuration-changing term o ⊗ O of a scale site.

    ``site`` is the matrix of the term in the configuration basis of the
    new scale (kinetic-energy matrix for a DVR mode, an annihilation-type
    matrix for a fermionic orbital).  ``block`` is the operator of already
    processed scales it multiplies: a name resolved in the current block,
    an explicit matrix, or None for the identity.  With
    ``add_conjugate=True`` the Hermitian conjugate term o^dag ⊗ O^dag is
    added during assembly, which saves listing it separately.
    """

    site: np.ndarray
    block: "np.ndarray | str | None" = None
    add_conjugate: bool = False


@dataclass(frozen=True, eq=False)
class ScaleSite:
    """Description of the next scale to absorb into the block."""

    n_config: int
    diagonal_energy: np.ndarray
    diagonal_block_terms: "list[tuple[np.ndarray, np.ndarray | str]]" = field(
        default_factory=list
    )
    offdiag_couplings: "list[Coupling]" = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        e = np.asarray(self.diagonal_energy, dtype=float)
        if e.shape != (self.n_config,):
            raise DimensionMismatchError(
                f"diagonal_energy has shape {e.shape}, expected ({self.n_config},)"
            )
        for o, _ in self.diagonal_block_terms:
            if np.shape(o) != (self.n_config,):
                raise DimensionMismatchError(
                    "per-configuration coefficients must have one entry per configuration"
                )
        for c in self.offdiag_couplings:
            if np.shape(c.site) != (self.n_config, self.n_config):
                raise DimensionMismatchError(
                    f"coupling site matrix has shape {np.shape(c.site)}, "
                    f"expected ({self.n_config}, {self.n_config})"
                )


@dataclass(frozen=True, eq=False)
class OpTerm:
    """One product term coeff * (site part ⊗ block part) of an operator.

    ``site`` may be None (identity on the new scale), a length-N vector of
    diagonal values, or a full N x N matrix.  ``block`` may be None
    (identity on the block), a name, or an explicit matrix.
    """

    site: "np.ndarray | None" = None
    block: "np.ndarray | str | None" = None
    coeff: float = 1.0


@dataclass(frozen=True, eq=False)
class StepRecord:
    """What one growth step contributed to the state reconstruction.

    ``rotations`` are the per-configuration adiabatic rotations
    (n_config, prev_dim, d_adiabatic); ``vectors`` are the superblock
    eigenvectors (n_config * d_adiabatic, d_retained).  The first record of
    a run has ``rotations=None`` and ``vectors`` mapping the primitive basis
    of the first scale to its retained eigenbasis.  ``assembly`` optionally
    keeps the dressed inputs (adiabatic energies and couplings) so tests
    can rebuild and perturb the superblock.
    """

    n_config: int
    vectors: np.ndarray
    rotations: "np.ndarray | None" = None
    energies: "np.ndarray | None" = None
    assembly: "dict | None" = None


@dataclass(frozen=True, eq=False)
class BlockState:
    """Retained eigenbasis of all scales processed so far."""

    energies: np.ndarray
    renormalized_ops: "dict[str, np.ndarray]"
    log: "tuple[StepRecord, ...]" = ()

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    @property
    def last_rotations(self):
        return self.log[-1].rotations if self.log else None

    @property
    def last_vectors(self):
        return self.log[-1].vectors if self.log else None


@dataclass(frozen=True, eq=False)
class OverlapBlock:
    """Dressed cross-configuration operator matrices A(m, n) = C(m)^dag O C(n).

    ``blocks`` has shape (N, N, d, d); entry [m, n] carries the operator
    matrix elements between the adiabatic states of configurations m and n.
    For the identity operator the diagonal blocks are set to the exact
    identity (the rotations are orthonormal) and every singular value of an
    off-diagonal block is bounded by 1.
    """

    blocks: np.ndarray
    operator_name: str = "identity"

    @property
    def n_config(self) -> int:
        return self.blocks.shape[0]


def initial_block(
    hamiltonian,
    operators: "dict[str, np.ndarray] | None" = None,
    d_retain: "int | None" = None,
    close_multiplets: bool = False,
) -> BlockState:
    """Seed a NARG run by diagonalizing the Hamiltonian of the first scale.

    ``operators`` are primitive-basis matrices of everything later scales
    couple to; they are rotated into the retained eigenbasis.
    """
    pairs = eig_hermitian(np.asarray(hamiltonian))
    if d_retain is not None and d_retain < pairs.size:
        pairs = truncate_low(pairs, d_retain, close_multiplets=close_multiplets)
    v = pairs.vectors
    ops = {}
    for name, op in (operators or {}).items():
        ops[name] = v.conj().T @ np.asarray(op) @ v
    record = StepRecord(
        n_config=v.shape[0], vectors=v, rotations=None, energies=pairs.values
    )
    return BlockState(energies=pairs.values, renormalized_ops=ops, log=(record,))


def _resolve(block_ops, op):
    if op is None:
        return None
    if isinstance(op, str):
        try:
            return block_ops[op]
        except KeyError:
            raise MissingOperatorError(op) from None
    return np.asarray(op)


def adiabatic_solve(
    block: BlockState, site: ScaleSite, d_adiabatic: "int | None" = None
) -> "list[EigenPairs]":
    """Conditional eigenstates of the block at every frozen site configuration.

    Returns one :class:`EigenPairs` per configuration, each truncated to the
    ``d_adiabatic`` lowest states, in site configuration order.
    """
    d_prev = block.dim
    d_a = d_prev if d_adiabatic is None else min(d_adiabatic, d_prev)
    terms = [
        (np.asarray(g, dtype=float), _resolve(block.renormalized_ops, op))
        for g, op in site.diagonal_block_terms
    ]
    site_energy = np.asarray(site.diagonal_energy, dtype=float)
    out = []
    base = np.diag(block.energies)
    for n in range(site.n_config):
        h = base.copy()
        for g, op in terms:
            if g[n] == 0.0:
                continue
            if op is None:
                h[np.diag_indices_from(h)] += g[n]
            else:
                h = h + g[n] * op
        h[np.diag_indices_from(h)] += site_energy[n]
        out.append(truncate_low(eig_hermitian(h), d_a))
    return out


def overlap_dressed(rotations, operator=None, operator_name=None) -> OverlapBlock:
    """Global overlap matrix between adiabatic states, dressed with an operator.

    ``rotations`` holds the per-configuration rotations, either as a list of
    equally shaped (prev_dim, d) matrices or as one (N, prev_dim, d) array.
    ``operator=None`` means the identity: the result is then the plain
    overlap matrix whose squared moduli are state fidelities; its diagonal
    blocks are exact identities.
    """
    r = np.asarray(rotations)
    if r.ndim != 3:
        raise DimensionMismatchError(
            f"rotations must stack to (N, prev_dim, d), got shape {r.shape}"
        )
    rdag = r.conj().transpose(0, 2, 1)
    if operator is None:
        blocks = np.matmul(rdag[:, None], r[None, :])
        n, d = r.shape[0], r.shape[2]
        blocks[np.arange(n), np.arange(n)] = np.eye(d)
        return OverlapBlock(blocks=blocks, operator_name=operator_name or "identity")
    op = np.asarray(operator)
    if op.shape != (r.shape[1], r.shape[1]):
        raise DimensionMismatchError(
            f"operator shape {op.shape} does not match rotation row dimension {r.shape[1]}"
        )
    dressed = np.matmul(op, r)
    blocks = np.matmul(rdag[:, None], dressed[None, :])
    return OverlapBlock(blocks=blocks, operator_name=operator_name or "operator")


def _stack_adiabatic(adiabatic):
    rotations = np.stack([p.vectors for p in adiabatic])
    energies = np.stack([p.values for p in adiabatic])
    return rotations, energies


def _assemble(energies, parts, atol):
    """Shared superblock assembly from (site matrix, dressed blocks, conj) parts."""
    n, d_a = energies.shape
    h4 = np.zeros((n, d_a, n, d_a), dtype=complex if any(
        np.iscomplexobj(a) for _, a, _ in parts
    ) else float)
    for o, a, add_conjugate in parts:
        h4 = h4 + o[:, None, :, None] * a.transpose(0, 2, 1, 3)
        if add_conjugate:
            a_hc = a.transpose(1, 0, 3, 2).conj()
            h4 = h4 + o.conj().T[:, None, :, None] * a_hc.transpose(0, 2, 1, 3)
    h = h4.reshape(n * d_a, n * d_a)
    h[np.diag_indices_from(h)] += energies.reshape(-1)
    scale = max(1.0, np.abs(h).max())
    asym = np.abs(h - h.conj().T).max()
    if asym > atol * scale:
        raise NonHermitianResultError(
            f"superblock asymmetry {asym:.3e}; check the coupling list for a "
            "missing Hermitian-conjugate term"
        )
    return 0.5 * (h + h.conj().T)


def superblock_assemble(
    site: ScaleSite,
    adiabatic: "list[EigenPairs]",
    dressed: "list[OverlapBlock]",
    atol: float = HERMITICITY_ATOL,
) -> np.ndarray:
    """Composite Hamiltonian over (configurations) x (adiabatic states).

    ``dressed`` must align with ``site.offdiag_couplings``.  The result is
    indexed configuration-major: row (m, b) is m * d_adiabatic + b.

    Raises
    ------
    NonHermitianResultError
        If the assembled matrix is not Hermitian, which almost always means
        a conjugate coupling term is missing from the site.
    """
    if len(dressed) != len(site.offdiag_couplings):
        raise DimensionMismatchError(
            f"{len(site.offdiag_couplings)} couplings but {len(dressed)} dressed overlap blocks"
        )
    _, energies = _stack_adiabatic(adiabatic)
    parts = [
        (np.asarray(c.site), ob.blocks, c.add_conjugate)
        for c, ob in zip(site.offdiag_couplings, dressed)
    ]
    return _assemble(energies, parts, atol)


def reassemble_superblock(record: StepRecord, rotations=None) -> np.ndarray:
    """Rebuild the superblock of a logged step from its stored assembly.

    ``rotations`` replaces the logged adiabatic rotations, which is how the
    gauge-invariance tests flip eigenvector signs and watch the spectrum.
    Requires the step to have been run with ``log_assembly=True``.
    """
    if record.assembly is None:
        raise IncompleteLogError("step was not logged with log_assembly=True")
    r = record.rotations if rotations is None else np.asarray(rotations)
    parts = []
    for o, op, add_conjugate in record.assembly["couplings"]:
        parts.append((o, overlap_dressed(r, op).blocks, add_conjugate))
    return _assemble(
        record.assembly["adiabatic_energies"], parts, HERMITICITY_ATOL
    )


def renormalize_operators(
    rotations,
    superblock_vectors,
    op_specs: "dict[str, OpTerm | list[OpTerm]]",
    block_ops: "dict[str, np.ndarray] | None" = None,
) -> "dict[str, np.ndarray]":
    """Express operators in the newly retained superblock basis.

    Each spec is a sum of :class:`OpTerm` products.  A block operator O with
    identity site part becomes U^dag [delta_mn C(m)^dag O C(n)] U; a
    site-diagonal function f becomes U^dag [delta_mn delta_ba f(n)] U; a
    full site matrix o pairs with its block operator as
    U^dag [o_mn C(m)^dag O C(n)] U.  Hermitian inputs stay Hermitian.
    """
    r = np.asarray(rotations)
    n, d_prev, d_a = r.shape
    u = np.asarray(superblock_vectors)
    if u.shape[0] != n * d_a:
        raise DimensionMismatchError(
            f"superblock vectors have {u.shape[0]} rows, expected {n * d_a}"
        )
    u4 = u.reshape(n, d_a, u.shape[1])
    # k[n] maps the new retained basis into the previous block basis at
    # configuration n; every renormalization below is a quadratic form in it
    k = np.matmul(r, u4)
    block_ops = block_ops or {}
    out = {}
    for name, spec in op_specs.items():
        terms = [spec] if isinstance(spec, OpTerm) else list(spec)
        if not terms:
            raise UnknownOperatorError(name)
        acc = np.zeros((u.shape[1], u.shape[1]), dtype=u.dtype)
        for term in terms:
            op = _resolve(block_ops, term.block)
            ok = k if op is None else np.matmul(op, k)
            site = term.site
            if site is None:
                acc += term.coeff * np.einsum("nia,nib->ab", k.conj(), ok)
            else:
                site = np.asarray(site)
                if site.ndim == 1:
                    if site.shape != (n,):
                        raise DimensionMismatchError(
                            f"diagonal site part of '{name}' has shape {site.shape}"
                        )
                    acc += term.coeff * np.einsum(
                        "n,nia,nib->ab", site, k.conj(), ok
                    )
                else:
                    if site.shape != (n, n):
                        raise DimensionMismatchError(
                            f"site part of '{name}' has shape {site.shape}, expected ({n}, {n})"
                        )
                    # sum_mn o[m,n] k_m^dag (O k_n), folded as weighted sums
                    s = np.einsum("mn,mia->nia", site, k.conj())
                    acc += term.coeff * np.einsum("nia,nib->ab", s, ok)
        out[name] = acc
    return out


def narg_step(
    block: BlockState,
    site: ScaleSite,
    d_adiabatic: "int | None" = None,
    d_retain: "int | None" = None,
    op_specs: "dict[str, OpTerm | list[OpTerm]] | None" = None,
    close_multiplets: bool = False,
    degeneracy_gap: float = DEGENERACY_GAP,
    log_assembly: bool = False,
) -> BlockState:
    """Absorb one scale into the block and return the new block.

    Composes the adiabatic solve, overlap dressing, superblock assembly,
    diagonalization, truncation and operator renormalization, and appends
    the (rotations, eigenvectors) pair to the step log.
    """
    adiabatic = adiabatic_solve(block, site, d_adiabatic)
    rotations, adiab_energies = _stack_adiabatic(adiabatic)
    n, _, d_a = rotations.shape

    dressed = []
    identity_cache = None
    for coupling in site.offdiag_couplings:
        op = _resolve(block.renormalized_ops, coupling.block)
        if op is None:
            if identity_cache is None:
                identity_cache = overlap_dressed(rotations)
            dressed.append(identity_cache)
        else:
            dressed.append(overlap_dressed(rotations, op))

    h = superblock_assemble(site, adiabatic, dressed)
    dim = h.shape[0]
    keep = dim if d_retain is None else min(d_retain, dim)
    if close_multiplets and keep < dim:
        pairs = truncate_low(
            eig_hermitian_lowest(h, min(dim, keep + 8)),
            keep,
            close_multiplets=True,
            gap=degeneracy_gap,
        )
    else:
        pairs = eig_hermitian_lowest(h, keep)

    new_ops = renormalize_operators(
        rotations, pairs.vectors, op_specs or {}, block.renormalized_ops
    )

    assembly = None
    if log_assembly:
        assembly = {
            "adiabatic_energies": adiab_energies,
            "couplings": [
                (
                    np.asarray(c.site),
                    _resolve(block.renormalized_ops, c.block),
                    c.add_conjugate,
                )
                for c in site.offdiag_couplings
            ],
        }
    record = StepRecord(
        n_config=site.n_config,
        vectors=pairs.vectors,
        rotations=rotations,
        energies=pairs.values,
        assembly=assembly,
    )
    return BlockState(
        energies=pairs.values,
        renormalized_ops=new_ops,
        log=block.log + (record,),
    )


def expectation_diag(block: BlockState, name: str) -> np.ndarray:
    """Diagonal expectation values of a renormalized operator, per retained state."""
    op = _resolve(block.renormalized_ops, name)
    if op is None:
        raise UnknownOperatorError(name)
    return np.real(np.diag(op)).copy()


def geometric_diagnostic(rotations, spacing: float) -> np.ndarray:
    """Finite-difference quantum-metric estimate per state and grid link.

    For neighbouring configurations on a uniform grid the per-state metric
    is approximated from the decay of the state overlap,

        g[n, a] = (1 - |<phi_a(x_n) | phi_a(x_n + dx)>|^2) / dx^2.

    Returns a non-negative array of shape (n_links, n_states); it is zero
    for a configuration-independent fiber.
    """
    r = np.asarray(rotations)
    if r.ndim != 3:
        r = np.stack([np.asarray(m) for m in rotations])
    if r.shape[0] < 2:
        raise DimensionMismatchError("need at least two configurations")
    if spacing <= 0:
        raise DimensionMismatchError(f"spacing must be positive, got {spacing}")
    overlaps = np.einsum("nia,nia->na", r[:-1].conj(), r[1:])
    metric = (1.0 - np.abs(overlaps) ** 2) / spacing**2
    return np.clip(metric, 0.0, None)


def require_complete_log(log, expected_scales=None):
    """Validate a step log: one initial record, rotations on every later one."""
    if not log:
        raise IncompleteLogError("empty step log")
    if log[0].rotations is not None:
        raise IncompleteLogError("first record must be the initial-scale record")
    for i, rec in enumerate(log[1:], start=1):
        if rec.rotations is None:
            raise IncompleteLogError(f"record {i} is missing its adiabatic rotations")
    if expected_scales is not None and len(log) != expected_scales:
        raise IncompleteLogError(
            f"log has {len(log)} records, expected {expected_scales}"
        )
    return log
