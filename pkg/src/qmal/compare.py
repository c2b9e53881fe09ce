"""Cross-validation of the main pipeline against the brute-force oracle."""

from __future__ import annotations

from dataclasses import dataclass

from .circuit import (
    BeamSplitterOp,
    CircuitIR,
    DetectOp,
    Inject,
    LossOp,
    PhaseOp,
    RunOptions,
    StageOp,
    photon_gram,
    run,
)
from .errors import QmalError
from .evolve import beam_splitter, phase_shift
from .oracle import DENSE_CAP, DenseFirstQuantState, embedding_vectors
from .resolve import detection_probabilities


@dataclass(frozen=True)
class ComparisonResult:
    max_probability_diff: float
    max_density_diff: float
    patterns_checked: int
    cells_checked: int

    def passed(self, tolerance: float = 1e-8) -> bool:
        return (self.max_probability_diff <= tolerance
                and self.max_density_diff <= tolerance)


def oracle_run(ir: CircuitIR, dense_cap: int = DENSE_CAP) -> DenseFirstQuantState:
    """Drive the dense reference simulator over a circuit.

    Injections are hoisted to the start (each injection mode must be fresh),
    heralded detections project then park their modes, and unheralded
    detections are deferred so joint patterns stay readable at the end.
    """
    gram, _ = photon_gram(ir)
    modes_in = [op.mode for op in ir.ops if isinstance(op, Inject)]
    touched: set = set()
    parked: set = set()
    for op in ir.ops:
        if isinstance(op, Inject):
            if op.mode in touched and op.mode not in parked:
                raise QmalError(
                    "oracle cannot hoist an injection into a previously used mode")
            touched.add(op.mode)
        elif isinstance(op, BeamSplitterOp):
            touched |= {op.m1, op.m2}
            parked -= {op.m1, op.m2}
        elif isinstance(op, PhaseOp):
            touched.add(op.mode)
            parked.discard(op.mode)
        elif isinstance(op, LossOp):
            touched.add(op.mode)
            parked.discard(op.mode)
        elif isinstance(op, DetectOp):
            touched |= set(op.modes)
            if op.herald is not None:
                parked |= set(op.modes)
    vectors, r = embedding_vectors(gram)
    state = DenseFirstQuantState(ir.n_modes, ir.n_photons, r, dense_cap=dense_cap)
    state.inject_product(modes_in, vectors)
    for op in ir.ops:
        if isinstance(op, BeamSplitterOp):
            state.apply_external_unitary(
                beam_splitter(op.theta, op.m1, op.m2, ir.n_modes).matrix)
        elif isinstance(op, PhaseOp):
            state.apply_external_unitary(
                phase_shift(op.phi, op.mode, ir.n_modes).matrix)
        elif isinstance(op, LossOp):
            state.apply_loss(op.mode, op.eta)
        elif isinstance(op, DetectOp) and op.herald is not None:
            state.project_pattern(op.modes, op.herald)
            for m in op.modes:
                state.park_mode(m)
        elif isinstance(op, (Inject, StageOp)) or \
                (isinstance(op, DetectOp) and op.herald is None):
            continue
    return state


def compare_circuit(ir: CircuitIR, dense_cap: int = DENSE_CAP) -> ComparisonResult:
    """Run both simulators on a circuit and diff probabilities and densities.

    The circuit may contain heralded detections; unheralded ones are not
    supported here (the remainder would be a mixture over branches).
    """
    for op in ir.ops:
        if isinstance(op, DetectOp) and op.herald is None:
            raise QmalError("compare requires heralds on every detect op")
    from .resolve import resolve_interference

    result = run(ir, RunOptions())
    mu = result.final_state()
    probs = detection_probabilities(mu, result.gram)
    rho = resolve_interference(mu, result.gram)

    state = oracle_run(ir, dense_cap=dense_cap)
    oracle_probs = state.pattern_probabilities()
    oracle_rho = state.external_density_entries()

    keys = set(probs) | set(oracle_probs)
    dprob = max(
        (abs(probs.get(k, 0.0) - oracle_probs.get(k, 0.0)) for k in keys),
        default=0.0,
    )
    main_rho = {}
    for (i, j), v in rho.items_full():
        main_rho[(rho.basis.mal_of(i), rho.basis.mal_of(j))] = v
    cells = set(main_rho) | set(oracle_rho)
    drho = max(
        (abs(main_rho.get(k, 0.0) - oracle_rho.get(k, 0.0)) for k in cells),
        default=0.0,
    )
    return ComparisonResult(
        max_probability_diff=float(dprob),
        max_density_diff=float(drho),
        patterns_checked=len(keys),
        cells_checked=len(cells),
    )
