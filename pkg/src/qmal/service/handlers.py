"""Service-layer handlers: pure functions from request models to responses.

Both the HTTP app and the command-line client call these directly, so the
CLI works without a running server and the two entry points cannot drift.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json

from .. import __version__
from ..circuit import CircuitIR, RunOptions, parse_circuit_dict, run, space_report
from ..compare import compare_circuit
from ..oracle import DENSE_CAP
from .schemas import (
    CompareRequest,
    CompareResponse,
    DensityEntry,
    DensityPayload,
    ReportRequest,
    ReportResponse,
    RunRequest,
    RunResponse,
    SweepPoint,
    SweepRequest,
    SweepResponse,
)


def _digest(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _base_metadata(doc: dict, extra: dict | None = None) -> dict:
    meta = {"tool_version": __version__, "input_digest": _digest(doc)}
    if extra:
        meta.update(extra)
    return meta


def _pattern_key(counts) -> str:
    return ",".join(str(c) for c in counts)


def handle_run(request: RunRequest) -> RunResponse:
    doc = request.circuit.as_dict()
    ir = parse_circuit_dict(doc)
    options = RunOptions(
        prune=request.prune_threshold,
        dim_cap=request.dim_cap,
        resolve=request.resolve,
        fidelity_vs_ideal=request.fidelity_vs_ideal,
        seed=request.seed,
    )
    result = run(ir, options)
    density = None
    if result.resolved is not None:
        rho = result.resolved
        entries = [
            DensityEntry(row=i, col=j, re=float(v.real), im=float(v.imag))
            for (i, j), v in sorted(rho.entries.items())
        ]
        density = DensityPayload(
            basis=[list(mal) for mal in rho.basis.all_mals()]
            if rho.basis.dim <= 4096 else [],
            entries=entries,
        )
    metadata = _base_metadata(doc, {
        "seed": request.seed,
        "prune_threshold": request.prune_threshold,
        **result.metadata,
    })
    return RunResponse(
        patterns={_pattern_key(k): v for k, v in sorted(result.table.items())},
        pattern_modes=[list(m) for m in result.pattern_modes],
        herald_probability=result.herald_probability,
        expectations=dict(sorted(result.expectations.items())),
        fidelity=result.fidelity_value,
        density=density,
        report=result.space.as_dict(),
        metadata=metadata,
    )


def handle_report(request: ReportRequest) -> ReportResponse:
    doc = request.circuit.as_dict()
    ir = parse_circuit_dict(doc)
    report = space_report(ir)
    return ReportResponse(report=report.as_dict(), metadata=_base_metadata(doc))


def handle_compare(request: CompareRequest) -> CompareResponse:
    doc = request.circuit.as_dict()
    ir = parse_circuit_dict(doc)
    outcome = compare_circuit(ir, dense_cap=request.dense_cap or DENSE_CAP)
    return CompareResponse(
        max_probability_diff=outcome.max_probability_diff,
        max_density_diff=outcome.max_density_diff,
        patterns_checked=outcome.patterns_checked,
        cells_checked=outcome.cells_checked,
        passed=outcome.passed(request.tolerance),
        metadata=_base_metadata(doc, {"tolerance": request.tolerance}),
    )


def apply_sweep_parameter(doc: dict, parameter: str, value: float) -> dict:
    """Substitute one sweep parameter into a circuit document."""
    out = json.loads(json.dumps(doc))
    if parameter == "visibility":
        out["gram"] = {"uniform_visibility": value}
    elif parameter == "vbar":
        body = dict(out.get("gram", {}).get("normal", {}))
        body["mean"] = value
        body.setdefault("variance", 1e-4)
        out["gram"] = {"normal": body}
    elif parameter == "eta":
        for op in out.get("ops", []):
            if "loss" in op:
                op["loss"]["eta"] = value
    elif parameter == "etabar":
        raise ValueError(
            "etabar sweeps draw per-element values; use 'eta' with explicit "
            "loss ops or preprocess the circuit")
    else:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    return out


def _sweep_point(doc: dict, parameter: str, value: float,
                 seed: int | None) -> SweepPoint:
    point_doc = apply_sweep_parameter(doc, parameter, value)
    ir = parse_circuit_dict(point_doc)
    options = RunOptions(seed=seed, fidelity_vs_ideal=True, resolve=True)
    result = run(ir, options)
    return SweepPoint(
        value=value,
        herald_probability=result.herald_probability,
        fidelity=result.fidelity_value,
        expectations=dict(sorted(result.expectations.items())),
    )


def handle_sweep(request: SweepRequest) -> SweepResponse:
    doc = request.circuit.as_dict()
    if not request.grid:
        raise ValueError("sweep grid must be non-empty")
    values = list(request.grid)
    if request.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(request.jobs) as pool:
            points = list(pool.map(
                lambda v: _sweep_point(doc, request.parameter, v, request.seed),
                values,
            ))
    else:
        points = [_sweep_point(doc, request.parameter, v, request.seed)
                  for v in values]
    return SweepResponse(
        parameter=request.parameter,
        points=points,
        metadata=_base_metadata(doc, {"seed": request.seed,
                                      "grid": values,
                                      "jobs": request.jobs}),
    )
