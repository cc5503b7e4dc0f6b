"""Command-line entry point: run experiments, emit machine-readable reports.

Every run writes the same report twice, as CSV (one row per retained
dimension and level, ready for plotting) and as JSON (full metadata for
programmatic consumption).  Identical inputs produce byte-identical files;
wall-clock timing therefore goes to stdout only.
"""

import argparse
import csv
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__, boson, letta, qchem
from .errors import NargError

# tolerances for the tensor-network round-trip check
LETTA_NORM_TOL = 1e-10
LETTA_OVERLAP_TOL = 1e-8
LETTA_ENERGY_TOL = 1e-8


def _retain_list(text):
    try:
        values = [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad retained-state list {text!r}")
    if not values or any(v < 1 for v in values) or sorted(values) != values:
        raise argparse.ArgumentTypeError("--retain must be a non-empty ascending list")
    return values


def _hash_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


def _write_report(prefix, metadata, rows, columns):
    """Write PREFIX.csv and PREFIX.json with identical content."""
    csv_path, json_path = f"{prefix}.csv", f"{prefix}.json"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    payload = {"schema_version": 1, "metadata": metadata, "rows": rows}
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def _drift_column(rows, d_list, n_levels):
    """|E(D_k) - E(D_{k-1})| per level, attached to the later run's rows."""
    by_d = {}
    for row in rows:
        by_d.setdefault(row["d_retain"], {})[row["level"]] = row["energy"]
    for row in rows:
        d = row["d_retain"]
        pos = d_list.index(d)
        if pos == 0:
            continue
        prev = by_d[d_list[pos - 1]].get(row["level"])
        if prev is not None:
            row["drift"] = abs(row["energy"] - prev)


def cmd_boson(args) -> int:
    model, cfg = boson.load_model(args.config)
    if args.dvr_points is not None:
        model = boson.make_model(
            cfg["frequencies"],
            lambdas=cfg.get("lambdas", 0.0),
            couplings=cfg.get("coupling", 0.0),
            dvr_points=args.dvr_points,
        )
    n_levels = args.levels if args.levels is not None else int(cfg.get("n_levels", 16))

    t0 = time.perf_counter()
    oracle = None
    if args.oracle:
        oracle = boson.exact_diag_oracle(
            model, n_levels=n_levels, dvr_points=model.dvr_points
        )

    rows = []
    last_result = None
    for d in args.retain:
        result = boson.solve_narg(model, d_retain=d, n_levels=n_levels)
        last_result = result
        for level, energy in enumerate(result.energies):
            row = {
                "d_retain": d,
                "level": level,
                "energy": float(energy),
                "oracle_energy": None,
                "abs_error": None,
                "drift": None,
            }
            if oracle is not None:
                row["oracle_energy"] = float(oracle[level])
                row["abs_error"] = abs(float(energy) - float(oracle[level]))
            rows.append(row)
    _drift_column(rows, args.retain, n_levels)
    elapsed = time.perf_counter() - t0

    cfg_hash = _hash_bytes(json.dumps(cfg, sort_keys=True).encode())
    metadata = {
        "kind": "boson",
        "version": __version__,
        "model_hash": cfg_hash,
        "n_modes": model.n_modes,
        "dvr_points": [int(p) for p in model.dvr_points],
        "mode_order": [int(i) for i in boson.processing_order(model)],
        "retain": args.retain,
        "n_levels": n_levels,
        "oracle": bool(args.oracle),
        "seed": args.seed,
    }
    csv_path, json_path = _write_report(
        args.out, metadata, rows,
        ["d_retain", "level", "energy", "oracle_energy", "abs_error", "drift"],
    )

    if args.letta_out:
        _write_letta_artifact(args.letta_out, model, cfg, args.retain[-1], last_result)
        print(f"letta artifact written to {args.letta_out}")
    print(f"report written to {csv_path} and {json_path} ({elapsed:.2f}s)")
    return 0


def _write_letta_artifact(path, model, cfg, d_retain, result):
    network = letta.extract_letta(result.log)
    records = []
    for rec in result.log:
        records.append({
            "n_config": rec.n_config,
            "vectors": {"shape": list(rec.vectors.shape),
                        "data": np.asarray(rec.vectors, float).ravel().tolist()},
            "rotations": None if rec.rotations is None else {
                "shape": list(rec.rotations.shape),
                "data": np.asarray(rec.rotations, float).ravel().tolist()},
        })
    payload = {
        "schema_version": 1,
        "kind": "boson_letta",
        "config": cfg,
        "dvr_points": [int(p) for p in model.dvr_points],
        "d_retain": d_retain,
        "terminal": 0,
        "energies": [float(e) for e in result.energies],
        "network": letta.to_dict(network),
        "raw_log": records,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def cmd_qchem(args) -> int:
    with open(args.fcidump) as fh:
        text = fh.read()
    data = qchem.parse_fcidump(text)
    perm = qchem.order_orbitals(data, args.ordering)
    data = qchem.permute_orbitals(data, perm)
    e_mf = args.mean_field_energy
    if e_mf is None:
        e_mf = data.e_mean_field

    t0 = time.perf_counter()
    oracle = None
    if args.oracle:
        oracle = qchem.fci_oracle(data, n_levels=args.levels)

    rows = []
    for d in args.retain:
        result = qchem.grow_block(
            data, d_retain=d, l_init=args.l_init, n_levels=args.levels
        )
        fraction = None
        if oracle is not None and e_mf is not None:
            fraction = qchem.correlation_fraction(
                result.ground_energy, e_mf, float(oracle[0])
            )
        for level, energy in enumerate(result.energies):
            row = {
                "d_retain": d,
                "level": level,
                "energy": float(energy),
                "oracle_energy": None,
                "abs_error": None,
                "drift": None,
                "correlation_fraction": fraction if level == 0 else None,
            }
            if oracle is not None and level < len(oracle):
                row["oracle_energy"] = float(oracle[level])
                row["abs_error"] = abs(float(energy) - float(oracle[level]))
            rows.append(row)
    _drift_column(rows, args.retain, args.levels)
    elapsed = time.perf_counter() - t0

    metadata = {
        "kind": "qchem",
        "version": __version__,
        "fcidump_hash": _hash_bytes(text.encode()),
        "n_orb": data.n_orb,
        "n_elec": data.n_elec,
        "ms2": data.ms2,
        "ordering": args.ordering,
        "l_init": args.l_init,
        "retain": args.retain,
        "n_levels": args.levels,
        "oracle": bool(args.oracle),
        "mean_field_energy": e_mf,
        "seed": args.seed,
    }
    csv_path, json_path = _write_report(
        args.out, metadata, rows,
        ["d_retain", "level", "energy", "oracle_energy", "abs_error", "drift",
         "correlation_fraction"],
    )
    print(f"report written to {csv_path} and {json_path} ({elapsed:.2f}s)")
    return 0


def cmd_letta_check(args) -> int:
    with open(args.artifact) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != 1 or "network" not in payload:
        raise ValueError("not a recognizable letta artifact")
    model, _ = boson.load_model(payload["config"])
    model = boson.make_model(
        model.frequencies, lambdas=model.lambdas, couplings=model.couplings,
        dvr_points=payload["dvr_points"],
    )
    network = letta.from_dict(payload["network"])
    terminal = int(payload.get("terminal", 0))
    reported = float(payload["energies"][terminal])

    psi = letta.contract_state(network, terminal=terminal)
    vec = psi.ravel()
    norm_residual = abs(1.0 - float(np.linalg.norm(vec)))

    raw = _log_from_payload(payload["raw_log"])
    direct = letta.product_state_vector(raw, terminal=terminal)
    overlap = abs(float(np.vdot(vec, direct)))
    overlap_residual = abs(1.0 - overlap)

    order = boson.processing_order(model)
    h, _ = boson.product_hamiltonian(model, order=order)
    energy = float(vec @ (h @ vec))
    energy_residual = abs(energy - reported)

    ok = (
        norm_residual <= LETTA_NORM_TOL
        and overlap_residual <= LETTA_OVERLAP_TOL
        and energy_residual <= LETTA_ENERGY_TOL
    )
    print(f"norm residual     {norm_residual:.3e}  (tol {LETTA_NORM_TOL:.0e})")
    print(f"overlap residual  {overlap_residual:.3e}  (tol {LETTA_OVERLAP_TOL:.0e})")
    print(f"energy residual   {energy_residual:.3e}  (tol {LETTA_ENERGY_TOL:.0e})")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _log_from_payload(records):
    from .core import StepRecord

    log = []
    for rec in records:
        vectors = np.asarray(rec["vectors"]["data"]).reshape(rec["vectors"]["shape"])
        rotations = None
        if rec["rotations"] is not None:
            rotations = np.asarray(rec["rotations"]["data"]).reshape(
                rec["rotations"]["shape"]
            )
        log.append(
            StepRecord(n_config=rec["n_config"], vectors=vectors, rotations=rotations)
        )
    return tuple(log)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narg",
        description="Nonadiabatic renormalization group eigensolver",
    )
    parser.add_argument("--version", action="version", version=f"narg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("boson", help="interacting-boson convergence run")
    p.add_argument("--config", required=True, help="model config JSON")
    p.add_argument("--retain", required=True, type=_retain_list,
                   help="comma list of retained dimensions, ascending")
    p.add_argument("--dvr-points", type=int, default=None,
                   help="override grid points per mode")
    p.add_argument("--levels", type=int, default=None,
                   help="override number of reported levels")
    p.add_argument("--oracle", action="store_true",
                   help="add exact-diagonalization columns (matched grids)")
    p.add_argument("--letta-out", default=None,
                   help="write the tensor-network artifact of the largest-D run")
    p.add_argument("--out", required=True, help="report path prefix")
    p.add_argument("--seed", type=int, default=None,
                   help="recorded in metadata; reserved for randomized diagnostics")
    p.set_defaults(func=cmd_boson)

    p = sub.add_parser("qchem", help="FCIDUMP block-growing run")
    p.add_argument("--fcidump", required=True, help="FCIDUMP integral file")
    p.add_argument("--retain", required=True, type=_retain_list,
                   help="comma list of retained dimensions, ascending")
    p.add_argument("--ordering", choices=("given", "reversed"), default="given")
    p.add_argument("--l-init", type=int, default=None,
                   help="orbitals solved exactly before growing")
    p.add_argument("--levels", type=int, default=1,
                   help="number of reported in-sector levels")
    p.add_argument("--mean-field-energy", type=float, default=None,
                   help="reference for the correlation fraction (falls back to ESCF)")
    p.add_argument("--oracle", action="store_true",
                   help="add determinant-FCI columns")
    p.add_argument("--out", required=True, help="report path prefix")
    p.add_argument("--seed", type=int, default=None,
                   help="recorded in metadata; reserved for randomized diagnostics")
    p.set_defaults(func=cmd_qchem)

    p = sub.add_parser("letta-check", help="tensor-network round-trip check")
    p.add_argument("artifact", help="artifact JSON from `narg boson --letta-out`")
    p.set_defaults(func=cmd_letta_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NargError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
