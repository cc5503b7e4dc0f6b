"""Leg-tied tensor network: export a NARG run and contract it back.

A run over L scales leaves one initial basis map V0 and, per later scale k,
the pair (adiabatic rotations C_k, superblock eigenvectors U_k).  Grouping
U_{k-1} with C_k produces tensors

    T_1[j_0, j_1, a_1]            = sum_g V0[j_0, g] C_1[j_1][g, a_1]
    T_k[j_{k-1}, j_k, a_{k-1}, a_k] = sum_g U_{k-1}[(j_{k-1}, a_{k-1}), g] C_k[j_k][g, a_k]
    T_L[j_{L-1}, a_{L-1}, t]      = U_{L-1}[(j_{L-1}, a_{L-1}), t]

in which consecutive tensors share the physical leg j_k.  Contracting the
virtual legs a_k (the physical legs are tied, not summed) for a terminal
index t rebuilds the t-th retained eigenstate on the full product grid.
The shared legs are what lets the state carry more entanglement across a
cut than the virtual dimension alone would allow in a matrix product
state.
"""

import json
from dataclasses import dataclass

import numpy as np

from .core import require_complete_log
from .errors import IncompleteLogError, TooLargeError

CONTRACT_MAX_SIZE = 1_000_000


@dataclass(frozen=True, eq=False)
class LettaNetwork:
    """Ordered leg-tied tensors; boundary tensors carry one fewer leg.

    ``physical_dims`` lists the configuration count of every scale;
    ``terminal_dim`` is the number of retained final eigenstates a terminal
    index can select.
    """

    tensors: "list[np.ndarray]"
    physical_dims: "tuple[int, ...]"
    terminal_dim: int

    @property
    def n_scales(self) -> int:
        return len(self.physical_dims)


def extract_letta(log) -> LettaNetwork:
    """Group a complete step log into the shared-leg tensor network."""
    log = require_complete_log(tuple(log))
    v0 = np.asarray(log[0].vectors)
    phys = [log[0].n_config]
    if len(log) == 1:
        return LettaNetwork(
            tensors=[v0], physical_dims=(log[0].n_config,), terminal_dim=v0.shape[1]
        )

    tensors = []
    carry = v0  # (j_prev, gamma): basis map feeding the next rotation
    for rec in log[1:]:
        rot = np.asarray(rec.rotations)  # (N_k, prev_dim, d_k)
        if rot.shape[1] != carry.shape[-1]:
            raise IncompleteLogError(
                f"rotation row dimension {rot.shape[1]} does not chain with "
                f"previous virtual dimension {carry.shape[-1]}"
            )
        if carry.ndim == 2:
            tensors.append(np.einsum("pg,nga->pna", carry, rot))
        else:
            tensors.append(np.einsum("pag,ngb->pnab", carry, rot))
        phys.append(rec.n_config)
        u = np.asarray(rec.vectors)
        carry = u.reshape(rec.n_config, rot.shape[2], u.shape[1])
    tensors.append(carry)  # boundary: (j_{L-1}, a_{L-1}, terminal)
    return LettaNetwork(
        tensors=tensors, physical_dims=tuple(phys), terminal_dim=carry.shape[-1]
    )


def _check_terminal(network, terminal):
    if not 0 <= terminal < network.terminal_dim:
        raise IndexError(
            f"terminal index {terminal} out of range for {network.terminal_dim} states"
        )


def contract_state(network: LettaNetwork, terminal: int = 0) -> np.ndarray:
    """Full coefficient tensor over all configuration indices.

    The result has one axis per scale (shape ``physical_dims``) and unit
    norm.  Cost and memory scale with the product of the physical
    dimensions, capped at ``CONTRACT_MAX_SIZE``.
    """
    _check_terminal(network, terminal)
    total = int(np.prod(network.physical_dims))
    if total > CONTRACT_MAX_SIZE:
        raise TooLargeError(f"product dimension {total} exceeds {CONTRACT_MAX_SIZE}")
    if network.n_scales == 1:
        return network.tensors[0][:, terminal].copy()

    # running tensor: (prefix configs..., j_k, a_k)
    run = network.tensors[0]
    for t in network.tensors[1:-1]:
        run = np.einsum("...ja,jkab->...jkb", run, t)
    last = network.tensors[-1][:, :, terminal]  # (j_{L-1}, a_{L-1})
    run = np.einsum("...ja,ja->...j", run, last)
    return run


def amplitude(network: LettaNetwork, configuration, terminal: int = 0) -> float:
    """Single coefficient <j_0 ... j_{L-1} | state(terminal)>.

    Evaluated by sweeping the chain once, so the cost is linear in the
    number of scales (times virtual-dimension-squared factors) rather than
    exponential.
    """
    _check_terminal(network, terminal)
    cfg = tuple(int(j) for j in configuration)
    if len(cfg) != network.n_scales:
        raise IndexError(
            f"configuration has {len(cfg)} indices, expected {network.n_scales}"
        )
    for j, d in zip(cfg, network.physical_dims):
        if not 0 <= j < d:
            raise IndexError(f"configuration index {j} out of range for dimension {d}")
    if network.n_scales == 1:
        return network.tensors[0][cfg[0], terminal].item()

    vec = network.tensors[0][cfg[0], cfg[1], :]
    for k, t in enumerate(network.tensors[1:-1], start=1):
        vec = vec @ t[cfg[k], cfg[k + 1], :, :]
    return (vec @ network.tensors[-1][cfg[-1], :, terminal]).item()


def product_state_vector(log, terminal: int = 0) -> np.ndarray:
    """Retained eigenstate on the product grid, from the raw per-step pairs.

    This is the reference reconstruction the grouped tensors must
    reproduce; it multiplies each step's rotations into its superblock
    eigenvectors without regrouping.
    """
    log = require_complete_log(tuple(log))
    psi = np.asarray(log[0].vectors)  # (j_0, gamma)
    for rec in log[1:]:
        rot = np.asarray(rec.rotations)
        u = np.asarray(rec.vectors).reshape(rec.n_config, rot.shape[2], -1)
        w = np.einsum("nga,nab->gnb", rot, u)
        psi = np.einsum("pg,gnb->pnb", psi.reshape(-1, psi.shape[-1]), w)
        psi = psi.reshape(-1, psi.shape[-1])
    total = psi.shape[0]
    if total > CONTRACT_MAX_SIZE:
        raise TooLargeError(f"product dimension {total} exceeds {CONTRACT_MAX_SIZE}")
    if not 0 <= terminal < psi.shape[1]:
        raise IndexError(f"terminal index {terminal} out of range")
    return psi[:, terminal]


def cut_rank(network: LettaNetwork, k: int, tol: float = 1e-10) -> int:
    """Schmidt rank of a contracted neighbouring-tensor pair across its cut.

    Contracts tensors k and k+1 over their shared virtual leg, keeping the
    shared physical leg tied (it appears once, grouped with the left side),
    then counts singular values above ``tol`` across
    [(left legs incl. tied j) x (right legs)].  A matrix product state with
    bond dimension D cannot exceed rank D across this cut; the tied leg
    lets the pair demand up to D times the shared physical dimension.
    """
    if not 0 <= k < len(network.tensors) - 1:
        raise IndexError(f"no tensor pair at position {k}")
    left, right = network.tensors[k], network.tensors[k + 1]
    first = left.ndim == 3 and k == 0
    last = right.ndim == 3 and k + 1 == len(network.tensors) - 1
    if first and last:
        joint = np.einsum("pja,jat->pjt", left, right)
    elif first:
        joint = np.einsum("pja,jkab->pjkb", left, right)
    elif last:
        joint = np.einsum("qjca,jat->qcjt", left, right)
    else:
        joint = np.einsum("qjca,jkab->qcjkb", left, right)
    # rows: left physical legs, incoming virtual leg, and the tied leg
    rows = int(np.prod(joint.shape[: left.ndim - 1]))
    mat = joint.reshape(rows, -1)
    s = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s.size else 0


def to_dict(network: LettaNetwork) -> dict:
    """JSON-ready container: leg dimensions plus row-major tensor data."""
    return {
        "schema_version": 1,
        "physical_dims": list(network.physical_dims),
        "terminal_dim": network.terminal_dim,
        "tensors": [
            {"shape": list(t.shape), "data": np.asarray(t, dtype=float).ravel().tolist()}
            for t in network.tensors
        ],
    }


def from_dict(payload: dict) -> LettaNetwork:
    if payload.get("schema_version") != 1:
        raise ValueError("unsupported network container version")
    tensors = [
        np.asarray(t["data"], dtype=float).reshape(t["shape"])
        for t in payload["tensors"]
    ]
    return LettaNetwork(
        tensors=tensors,
        physical_dims=tuple(payload["physical_dims"]),
        terminal_dim=int(payload["terminal_dim"]),
    )


def save_network(network: LettaNetwork, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(network), fh)


def load_network(path) -> LettaNetwork:
    with open(path) as fh:
        return from_dict(json.load(fh))
