"""Interacting-boson application: anharmonic modes with pairwise x^2 x^2 coupling.

The model is

    H = sum_i (w_i / 2) (p_i^2 + x_i^2 + lambda_i x_i^4)
        + sum_{i<j} g_ij sqrt(w_i w_j) x_i^2 x_j^2

in dimensionless coordinates.  Modes are processed from the highest
frequency down; each mode lives on a sinc-DVR grid, so every coupling
operator is diagonal on the grid and only the kinetic energy moves between
grid points.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .core import (
    BlockState,
    Coupling,
    OpTerm,
    ScaleSite,
    initial_block,
    narg_step,
)
from .dvr import DvrBasis, build_uniform_dvr
from .errors import DimensionMismatchError, InvalidCountError, TooLargeError
from .numerics import eig_hermitian_lowest

# grid half-width for a unit-frequency mode, rescaled by 1/sqrt(w) per mode
X_MAX_UNIT = 8.0

# direct-product dimension limits for the exact oracle
ORACLE_MAX_DIM = 20000
_ORACLE_DENSE_MAX_DIM = 1500


@dataclass(frozen=True, eq=False)
class BosonModel:
    """Frequencies, anharmonicities, pair couplings and per-mode grid sizes."""

    frequencies: np.ndarray
    lambdas: np.ndarray
    couplings: np.ndarray
    dvr_points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float)
        lam = np.asarray(self.lambdas, dtype=float)
        g = np.asarray(self.couplings, dtype=float)
        pts = np.asarray(self.dvr_points, dtype=int)
        n = w.shape[0]
        if np.any(w <= 0):
            raise ValueError("all frequencies must be positive")
        if lam.shape != (n,) or pts.shape != (n,):
            raise DimensionMismatchError("lambdas/dvr_points must match frequencies")
        if g.shape != (n, n) or not np.allclose(g, g.T, atol=1e-14):
            raise DimensionMismatchError("coupling matrix must be symmetric NxN")
        if np.abs(np.diag(g)).max(initial=0.0) > 1e-14:
            raise ValueError("coupling matrix must have zero diagonal")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "dvr_points", pts)

    @property
    def n_modes(self) -> int:
        return self.frequencies.shape[0]


def make_model(frequencies, lambdas=0.0, couplings=0.0, dvr_points=15) -> BosonModel:
    """Build a model, broadcasting scalar anharmonicity/coupling/grid values."""
    w = np.atleast_1d(np.asarray(frequencies, dtype=float))
    n = w.shape[0]
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float), (n,)).copy()
    g = np.asarray(couplings, dtype=float)
    if g.ndim == 0:
        g = np.full((n, n), float(g))
        np.fill_diagonal(g, 0.0)
    pts = np.broadcast_to(np.asarray(dvr_points, dtype=int), (n,)).copy()
    return BosonModel(frequencies=w, lambdas=lam, couplings=g, dvr_points=pts)


def three_mode_model(dvr_points=15) -> BosonModel:
    """Small strongly anharmonic fixture used throughout the test suite."""
    return make_model([3.1, 2.0, 1.3], lambdas=0.2, couplings=0.1, dvr_points=dvr_points)


def demo_model(n_modes=20, dvr_points=15) -> BosonModel:
    """Larger demonstration model: log-spaced frequencies, all pairs coupled."""
    w = np.logspace(np.log10(6.0), np.log10(1.0), n_modes)
    return make_model(w, lambdas=0.1, couplings=0.05, dvr_points=dvr_points)


def load_model(source) -> "tuple[BosonModel, dict]":
    """Read a model from a JSON config (path, file object, or dict).

    Schema (version 1): ``schema_version`` (required, must be 1),
    ``frequencies`` (list), ``lambdas`` (scalar or list, default 0),
    ``coupling`` (scalar fill or full matrix, default 0), ``dvr_points``
    (scalar or list, default 15), ``n_levels`` (default 16).
    Returns the model and the raw config dict.
    """
    if isinstance(source, dict):
        cfg = source
    elif hasattr(source, "read"):
        cfg = json.load(source)
    else:
        with open(source) as fh:
            cfg = json.load(fh)
    version = cfg.get("schema_version")
    if version != 1:
        raise ValueError(f"unsupported or missing schema_version: {version!r}")
    model = make_model(
        cfg["frequencies"],
        lambdas=cfg.get("lambdas", 0.0),
        couplings=cfg.get("coupling", 0.0),
        dvr_points=cfg.get("dvr_points", 15),
    )
    return model, cfg


def mode_basis(model: BosonModel, i: int) -> DvrBasis:
    """DVR grid for one mode, spanning X_MAX_UNIT / sqrt(w_i)."""
    return build_uniform_dvr(
        int(model.dvr_points[i]), X_MAX_UNIT / np.sqrt(model.frequencies[i])
    )


def mode_hamiltonian(model: BosonModel, i: int, basis: "DvrBasis | None" = None):
    """One-mode matrix (w/2)(T + x^2 + lambda x^4) on the mode's grid."""
    if not 0 <= i < model.n_modes:
        raise IndexError(f"mode index {i} out of range")
    basis = basis or mode_basis(model, i)
    w = model.frequencies[i]
    x2 = basis.points**2
    h = 0.5 * w * basis.kinetic + np.diag(0.5 * w * (x2 + model.lambdas[i] * x2**2))
    return h, basis


def processing_order(model: BosonModel) -> np.ndarray:
    """Mode indices sorted by descending frequency (highest scale first)."""
    return np.argsort(-model.frequencies, kind="stable")


def _x2_name(mode: int) -> str:
    return f"x2_{mode}"


def make_site(model: BosonModel, order, k: int, basis: "DvrBasis | None" = None) -> ScaleSite:
    """ScaleSite for the k-th mode in processing order.

    The couplings to every already-processed mode i enter the
    per-configuration Hamiltonians with coefficient
    g_ik sqrt(w_i w_k) (x_k^n)^2 on the renormalized x_i^2 operator; the
    mode's own kinetic energy is the only configuration-changing term.
    """
    order = np.asarray(order)
    mode = int(order[k])
    basis = basis or mode_basis(model, mode)
    w = model.frequencies[mode]
    x2 = basis.points**2
    terms = []
    for j in range(k):
        earlier = int(order[j])
        g = model.couplings[earlier, mode]
        if g != 0.0:
            coeff = g * np.sqrt(model.frequencies[earlier] * w)
            terms.append((coeff * x2, _x2_name(earlier)))
    return ScaleSite(
        n_config=basis.n,
        diagonal_energy=0.5 * w * (x2 + model.lambdas[mode] * x2**2),
        diagonal_block_terms=terms,
        offdiag_couplings=[Coupling(site=0.5 * w * basis.kinetic, block=None)],
        label=f"mode{mode}",
    )


def _reversal(n: int) -> np.ndarray:
    return np.eye(n)[::-1].copy()


@dataclass(frozen=True, eq=False)
class BosonResult:
    """Energies of the final superblock plus the block that produced them."""

    energies: np.ndarray
    block: BlockState
    order: np.ndarray

    @property
    def log(self):
        return self.block.log


def solve_narg(
    model: BosonModel,
    d_retain: "int | None" = None,
    n_levels: int = 16,
    d_adiabatic: "int | None" = None,
    close_multiplets: bool = False,
    with_parity: bool = True,
    log_assembly: bool = False,
) -> BosonResult:
    """Run the full renormalization-group sweep over all modes.

    ``d_retain=None`` keeps every state at every step (exact, exponential
    cost).  The reported energies are the lowest ``n_levels`` eigenvalues of
    the final superblock, so ``n_levels`` may exceed ``d_retain``; the
    final block retains max(d_retain, n_levels) states.
    """
    order = processing_order(model)
    first = int(order[0])
    basis0 = mode_basis(model, first)
    h0, _ = mode_hamiltonian(model, first, basis0)
    ops = {}
    future = model.couplings[first, order[1:]] if model.n_modes > 1 else np.zeros(0)
    if np.any(future != 0.0):
        ops[_x2_name(first)] = np.diag(basis0.points**2)
    if with_parity:
        ops["parity"] = _reversal(basis0.n)
    d0 = None if d_retain is None else min(d_retain, basis0.n)
    block = initial_block(h0, operators=ops, d_retain=d0, close_multiplets=close_multiplets)

    for k in range(1, model.n_modes):
        mode = int(order[k])
        basis = mode_basis(model, mode)
        site = make_site(model, order, k, basis)
        last = k == model.n_modes - 1
        specs = {}
        if not last:
            remaining = order[k + 1 :]
            for j in range(k + 1):
                prev = int(order[j])
                if np.any(model.couplings[prev, remaining] != 0.0):
                    if prev == mode:
                        specs[_x2_name(prev)] = OpTerm(site=basis.points**2)
                    else:
                        specs[_x2_name(prev)] = OpTerm(block=_x2_name(prev))
        if with_parity:
            specs["parity"] = OpTerm(site=_reversal(basis.n), block="parity")
        keep = d_retain
        if last and d_retain is not None:
            keep = max(d_retain, n_levels)
        block = narg_step(
            block,
            site,
            d_adiabatic=d_adiabatic if d_adiabatic is not None else d_retain,
            d_retain=keep,
            op_specs=specs,
            close_multiplets=close_multiplets,
            log_assembly=log_assembly,
        )

    if n_levels > block.dim:
        raise InvalidCountError(
            f"n_levels={n_levels} exceeds the {block.dim} states of the final superblock"
        )
    return BosonResult(energies=block.energies[:n_levels], block=block, order=order)


def product_hamiltonian(model: BosonModel, order=None, dvr_points=None):
    """Sparse direct-product Hamiltonian and the per-mode grids.

    ``order`` permutes the tensor factors (defaults to model order);
    ``dvr_points`` overrides the per-mode grid sizes.
    """
    order = np.arange(model.n_modes) if order is None else np.asarray(order)
    if dvr_points is not None:
        pts = np.broadcast_to(np.asarray(dvr_points, dtype=int), (model.n_modes,))
        model = BosonModel(
            frequencies=model.frequencies,
            lambdas=model.lambdas,
            couplings=model.couplings,
            dvr_points=pts.copy(),
        )
    bases = [mode_basis(model, int(i)) for i in order]
    dims = [b.n for b in bases]
    total = int(np.prod(dims))
    if total > ORACLE_MAX_DIM:
        raise TooLargeError(f"direct-product dimension {total} exceeds {ORACLE_MAX_DIM}")

    h = scipy.sparse.csr_matrix((total, total))
    for pos, i in enumerate(order):
        hi, _ = mode_hamiltonian(model, int(i), bases[pos])
        left = int(np.prod(dims[:pos])) if pos else 1
        right = int(np.prod(dims[pos + 1 :])) if pos + 1 < len(dims) else 1
        term = scipy.sparse.kron(
            scipy.sparse.identity(left),
            scipy.sparse.kron(scipy.sparse.csr_matrix(hi), scipy.sparse.identity(right)),
        )
        h = h + term.tocsr()

    # every pair coupling is diagonal on the product grid
    x2_cols = [b.points**2 for b in bases]
    diag = np.zeros(total)
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            i, j = int(order[a]), int(order[b])
            g = model.couplings[i, j]
            if g == 0.0:
                continue
            coeff = g * np.sqrt(model.frequencies[i] * model.frequencies[j])
            vec = np.ones(1)
            for pos in range(len(order)):
                if pos == a:
                    vec = np.kron(vec, x2_cols[pos])
                elif pos == b:
                    vec = np.kron(vec, x2_cols[pos])
                else:
                    vec = np.kron(vec, np.ones(dims[pos]))
            diag = diag + coeff * vec
    h = h + scipy.sparse.diags(diag)
    return h.tocsr(), [b.points for b in bases]


def exact_diag_oracle(
    model: BosonModel, n_levels: int = 16, dvr_points=25, order=None
) -> np.ndarray:
    """Lowest eigenvalues of the full direct-product Hamiltonian.

    Dense diagonalization below a size threshold, Lanczos above it (the
    basis is the same direct-product grid either way).  Restricted to a
    total dimension of ``ORACLE_MAX_DIM``.
    """
    h, _ = product_hamiltonian(model, order=order, dvr_points=dvr_points)
    dim = h.shape[0]
    if n_levels > dim:
        raise InvalidCountError(f"n_levels={n_levels} exceeds dimension {dim}")
    if dim <= _ORACLE_DENSE_MAX_DIM or n_levels >= dim - 1:
        pairs = eig_hermitian_lowest(h.toarray(), n_levels)
        return pairs.values
    k = min(dim - 2, n_levels + 10)
    v0 = np.full(dim, 1.0 / np.sqrt(dim))
    vals = scipy.sparse.linalg.eigsh(
        h, k=k, which="SA", v0=v0, tol=1e-12, return_eigenvectors=False
    )
    return np.sort(vals)[:n_levels]
