"""Circuit intermediate representation and the simulation driver.

A circuit is an ordered list of injections, unitary components, loss
elements, detector groups and stage boundaries over M external modes, plus a
distinguishability specification. Photon labels are fixed by injection
order. The driver keeps the state in a restricted MAL basis that grows only
when components connect new modes and shrinks when detectors retire modes,
so memory follows the circuit connectivity rather than M^N.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import DetectionPattern, build_basis
from .errors import (
    CircuitSemanticError,
    CircuitSyntaxError,
    HeraldImpossible,
    InvalidIR,
)
from .evolve import LossElement, apply_loss, apply_unitary, beam_splitter, phase_shift
from .overlaps import GramMatrix, validate_gram
from .resolve import (
    HeraldedMixture,
    detection_probabilities,
    postselect,
    resolve_interference,
    trace_out_modes,
)
from .state import ExternalDensity, MALDensity, fidelity, init_pure


# --- IR node types -----------------------------------------------------------

@dataclass(frozen=True)
class Inject:
    mode: int
    internal: int  # 1-based index into the internal-state slots


@dataclass(frozen=True)
class BeamSplitterOp:
    m1: int
    m2: int
    theta: float


@dataclass(frozen=True)
class PhaseOp:
    mode: int
    phi: float


@dataclass(frozen=True)
class LossOp:
    mode: int
    eta: float


@dataclass(frozen=True)
class DetectOp:
    modes: tuple
    herald: tuple | None = None


@dataclass(frozen=True)
class StageOp:
    pass


@dataclass(frozen=True)
class GramSpec:
    """One of: explicit matrix, uniform-visibility shorthand, normal draw."""

    kind: str  # "matrix" | "uniform_visibility" | "normal"
    matrix: tuple | None = None
    visibility: float | None = None
    mean: float | None = None
    variance: float | None = None
    seed: int | None = None


@dataclass(frozen=True)
class MeasureSpec:
    """Weighted-pattern observable over a subset of modes."""

    modes: tuple
    weights: dict  # counts tuple -> weight


@dataclass(frozen=True)
class CircuitIR:
    n_modes: int
    ops: tuple
    gram_spec: GramSpec
    measure: dict = field(default_factory=dict)  # name -> MeasureSpec

    @property
    def n_photons(self) -> int:
        return sum(1 for op in self.ops if isinstance(op, Inject))

    def internal_indices(self) -> tuple:
        return tuple(op.internal - 1 for op in self.ops if isinstance(op, Inject))

    def without_loss(self) -> "CircuitIR":
        return replace(self, ops=tuple(
            op for op in self.ops if not isinstance(op, LossOp)
        ))

    def with_ideal_photons(self) -> "CircuitIR":
        n_slots = max(self.internal_indices(), default=0) + 1
        ones = tuple((1.0,) * n_slots for _ in range(n_slots))
        return replace(self, gram_spec=GramSpec(kind="matrix", matrix=ones))

    def with_all_loss_eta(self, eta: float) -> "CircuitIR":
        return replace(self, ops=tuple(
            LossOp(mode=op.mode, eta=eta) if isinstance(op, LossOp) else op
            for op in self.ops
        ))


# --- distinguishability expansion ---------------------------------------------

def photon_gram(ir: CircuitIR, tol: float = 1e-9):
    """Per-photon Gram matrix implied by the circuit's gram spec.

    Returns (GramMatrix over photon labels, metadata dict). Normal draws
    record their seed and how many values were clipped into [0, 1].
    """
    phi0 = ir.internal_indices()
    n_slots = max(phi0, default=-1) + 1
    meta: dict = {"gram_kind": ir.gram_spec.kind}
    spec = ir.gram_spec
    if spec.kind == "matrix":
        raw = np.array(
            [[complex(*c) if isinstance(c, (tuple, list)) else complex(c)
              for c in row] for row in spec.matrix]
        )
        if raw.shape[0] < n_slots:
            raise CircuitSemanticError(
                f"gram matrix of size {raw.shape[0]} but internal index "
                f"{n_slots} referenced"
            )
        base = validate_gram(raw, tol)
    elif spec.kind == "uniform_visibility":
        v = spec.visibility
        if not 0.0 <= v <= 1.0:
            raise CircuitSemanticError(f"uniform visibility {v} outside [0, 1]")
        s = math.sqrt(v)
        raw = np.full((n_slots, n_slots), s, dtype=np.complex128)
        np.fill_diagonal(raw, 1.0)
        base = validate_gram(raw, tol)
        meta["visibility"] = v
    elif spec.kind == "normal":
        rng = np.random.default_rng(spec.seed)
        raw = np.eye(n_slots, dtype=np.complex128)
        clipped = 0
        for i in range(n_slots):
            for j in range(i + 1, n_slots):
                v = rng.normal(spec.mean, math.sqrt(spec.variance))
                if v < 0.0 or v > 1.0:
                    clipped += 1
                    v = min(max(v, 0.0), 1.0)
                raw[i, j] = raw[j, i] = math.sqrt(v)
        base = validate_gram(raw, tol)
        meta.update(gram_seed=spec.seed, gram_mean=spec.mean,
                    gram_variance=spec.variance, gram_clipped=clipped)
    else:
        raise CircuitSemanticError(f"unknown gram kind {spec.kind!r}")
    return base.relabeled(phi0), meta


# --- parsing -------------------------------------------------------------------

def parse_circuit(text: str) -> CircuitIR:
    """Parse and validate the JSON circuit format."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitSyntaxError(exc.msg, line=exc.lineno) from exc
    return parse_circuit_dict(doc)


def _parse_gram(raw) -> GramSpec:
    if not isinstance(raw, dict) or len(raw) != 1:
        raise CircuitSemanticError("gram must be one of matrix / "
                                   "uniform_visibility / normal")
    kind, body = next(iter(raw.items()))
    if kind == "matrix":
        rows = tuple(tuple(tuple(c) if isinstance(c, list) else c for c in row)
                     for row in body)
        return GramSpec(kind="matrix", matrix=rows)
    if kind == "uniform_visibility":
        return GramSpec(kind="uniform_visibility", visibility=float(body))
    if kind == "normal":
        return GramSpec(kind="normal", mean=float(body["mean"]),
                        variance=float(body["variance"]),
                        seed=int(body["seed"]) if body.get("seed") is not None else None)
    raise CircuitSemanticError(f"unknown gram kind {kind!r}")


def parse_circuit_dict(doc: dict) -> CircuitIR:
    if not isinstance(doc, dict):
        raise CircuitSemanticError("circuit document must be a JSON object")
    try:
        n_modes = int(doc["modes"])
    except KeyError:
        raise CircuitSemanticError("missing top-level 'modes'") from None
    if n_modes < 1:
        raise CircuitSemanticError(f"modes must be >= 1, got {n_modes}")
    gram_spec = _parse_gram(doc.get("gram", {"uniform_visibility": 1.0}))
    ops = []
    for k, raw in enumerate(doc.get("ops", [])):
        if not isinstance(raw, dict) or len(raw) != 1:
            raise CircuitSemanticError("each op must be a single-key object",
                                       op_index=k)
        tag, body = next(iter(raw.items()))
        try:
            if tag == "inject":
                ops.append(Inject(mode=int(body["mode"]),
                                  internal=int(body["internal"])))
            elif tag == "bs":
                m1, m2 = body["modes"]
                ops.append(BeamSplitterOp(m1=int(m1), m2=int(m2),
                                          theta=float(body["theta"])))
            elif tag == "phase":
                ops.append(PhaseOp(mode=int(body["mode"]), phi=float(body["phi"])))
            elif tag == "loss":
                ops.append(LossOp(mode=int(body["mode"]), eta=float(body["eta"])))
            elif tag == "detect":
                herald = body.get("herald")
                ops.append(DetectOp(
                    modes=tuple(int(m) for m in body["modes"]),
                    herald=tuple(int(h) for h in herald) if herald is not None else None,
                ))
            elif tag == "stage":
                ops.append(StageOp())
            else:
                raise CircuitSemanticError(f"unknown op tag {tag!r}", op_index=k)
        except (KeyError, TypeError, ValueError) as exc:
            raise CircuitSemanticError(f"malformed {tag} op: {exc}", op_index=k)
    measure = {}
    for name, body in (doc.get("measure") or {}).items():
        modes = tuple(int(m) for m in body["modes"])
        weights = {}
        for key, w in body["weights"].items():
            counts = tuple(int(c) for c in key.split(","))
            if len(counts) != len(modes):
                raise CircuitSemanticError(
                    f"measure {name!r}: pattern {key!r} arity != modes")
            weights[counts] = float(w)
        measure[name] = MeasureSpec(modes=modes, weights=weights)
    ir = CircuitIR(n_modes=n_modes, ops=tuple(ops), gram_spec=gram_spec,
                   measure=measure)
    validate_ir(ir)
    return ir


# --- static analysis -----------------------------------------------------------

class _Timeline:
    """Forward walk over the ops tracking each photon's allowed-mode set."""

    def __init__(self, n_modes: int):
        self.n_modes = n_modes
        self.allowed: list = []  # one set per injected photon
        self.detected_this_stage: set = set()
        self.dims: list = []  # product of set sizes after each op
        self.stage_peaks: list = [1]
        self.peak = 1
        self.peak_allowed: tuple = ()

    def _record(self):
        d = 1
        for s in self.allowed:
            d *= len(s)
        self.dims.append(d)
        self.stage_peaks[-1] = max(self.stage_peaks[-1], d)
        if d > self.peak:
            self.peak = d
            self.peak_allowed = tuple(tuple(sorted(s)) for s in self.allowed)

    def step(self, op, index: int):
        n_modes = self.n_modes
        if isinstance(op, Inject):
            if not 1 <= op.mode <= n_modes:
                raise CircuitSemanticError(f"inject mode {op.mode} outside 1..{n_modes}",
                                           op_index=index)
            if op.internal < 1:
                raise CircuitSemanticError("internal index must be >= 1",
                                           op_index=index)
            for p, s in enumerate(self.allowed):
                if op.mode in s:
                    raise CircuitSemanticError(
                        f"inject into mode {op.mode} that photon {p} can occupy",
                        op_index=index)
            self.allowed.append({op.mode})
        elif isinstance(op, (BeamSplitterOp, PhaseOp)):
            modes = ((op.m1, op.m2) if isinstance(op, BeamSplitterOp)
                     else (op.mode,))
            if len(set(modes)) != len(modes):
                raise CircuitSemanticError("component modes must be distinct",
                                           op_index=index)
            for m in modes:
                if not 1 <= m <= n_modes:
                    raise CircuitSemanticError(f"mode {m} outside 1..{n_modes}",
                                               op_index=index)
                if m in self.detected_this_stage:
                    raise CircuitSemanticError(
                        f"mode {m} already detected in this stage", op_index=index)
            if isinstance(op, BeamSplitterOp):
                support = set(modes)
                for s in self.allowed:
                    if s & support:
                        s |= support
        elif isinstance(op, LossOp):
            if not 1 <= op.mode <= n_modes:
                raise CircuitSemanticError(f"loss mode {op.mode} outside 1..{n_modes}",
                                           op_index=index)
            if not 0.0 <= op.eta <= 1.0:
                raise CircuitSemanticError(f"loss eta {op.eta} outside [0, 1]",
                                           op_index=index)
            if op.mode in self.detected_this_stage:
                raise CircuitSemanticError(
                    f"mode {op.mode} already detected in this stage", op_index=index)
            for s in self.allowed:
                if op.mode in s:
                    s.add(0)
        elif isinstance(op, DetectOp):
            if len(set(op.modes)) != len(op.modes):
                raise CircuitSemanticError("detect modes must be distinct",
                                           op_index=index)
            for m in op.modes:
                if not 1 <= m <= n_modes:
                    raise CircuitSemanticError(f"detect mode {m} outside 1..{n_modes}",
                                               op_index=index)
                if m in self.detected_this_stage:
                    raise CircuitSemanticError(
                        f"mode {m} already detected in this stage", op_index=index)
            if op.herald is not None:
                if len(op.herald) != len(op.modes):
                    raise CircuitSemanticError("herald arity != detect modes",
                                               op_index=index)
                if any(h < 0 for h in op.herald):
                    raise CircuitSemanticError("herald counts must be >= 0",
                                               op_index=index)
            hit = set(op.modes)
            for s in self.allowed:
                if s & hit:
                    s -= hit
                    s.add(0)
            self.detected_this_stage |= hit
        elif isinstance(op, StageOp):
            self.detected_this_stage = set()
            self.stage_peaks.append(1)
        self._record()


def validate_ir(ir: CircuitIR):
    tl = _Timeline(ir.n_modes)
    for k, op in enumerate(ir.ops):
        tl.step(op, k)
    n = ir.n_photons
    if n == 0:
        raise CircuitSemanticError("circuit injects no photons")
    for k, op in enumerate(ir.ops):
        if isinstance(op, Inject) and op.internal > n:
            raise CircuitSemanticError(
                f"internal index {op.internal} exceeds photon count {n}",
                op_index=k)
        if isinstance(op, DetectOp) and op.herald is not None \
                and sum(op.herald) > n:
            raise CircuitSemanticError("herald counts more photons than injected",
                                       op_index=k)
    for name, spec in ir.measure.items():
        for m in spec.modes:
            if not 1 <= m <= ir.n_modes:
                raise CircuitSemanticError(
                    f"measure {name!r} references mode {m} outside 1..{ir.n_modes}")
    return tl


def connectivity(ir: CircuitIR) -> tuple:
    """Per-photon allowed-mode sets at the circuit's peak dimension."""
    tl = validate_ir(ir)
    return tl.peak_allowed


@dataclass(frozen=True)
class SpaceReport:
    n_photons: int
    n_modes: int
    fock_dim: int
    full_unsym_dim: int
    mal_dim: int
    mal_dim_with_zero: int
    restricted_dim: int
    stage_peaks: tuple
    peak_allowed: tuple

    def as_dict(self) -> dict:
        return {
            "n_photons": self.n_photons,
            "n_modes": self.n_modes,
            "fock_dim": self.fock_dim,
            "full_unsym_dim": self.full_unsym_dim,
            "mal_dim": self.mal_dim,
            "mal_dim_with_zero": self.mal_dim_with_zero,
            "restricted_dim": self.restricted_dim,
            "stage_peaks": list(self.stage_peaks),
            "peak_allowed_sizes": [len(a) for a in self.peak_allowed],
        }


def space_report(ir: CircuitIR) -> SpaceReport:
    """All basis-size figures for the circuit; allocates no state."""
    tl = validate_ir(ir)
    n, m = ir.n_photons, ir.n_modes
    return SpaceReport(
        n_photons=n,
        n_modes=m,
        fock_dim=math.comb(n + n * m - 1, n),
        full_unsym_dim=(n * m) ** n,
        mal_dim=m ** n,
        mal_dim_with_zero=(m + 1) ** n,
        restricted_dim=tl.peak,
        stage_peaks=tuple(tl.stage_peaks),
        peak_allowed=tl.peak_allowed,
    )


# --- execution -------------------------------------------------------------------

@dataclass(frozen=True)
class RunOptions:
    prune: float = 0.0
    dim_cap: int | None = None
    resolve: bool = False
    fidelity_vs_ideal: bool = False
    resolve_photon_cap: int = 8
    tol: float = 1e-9
    seed: int | None = None  # overrides the gram spec's seed when set


@dataclass(frozen=True)
class DetectEvent:
    modes: tuple
    counts: tuple
    heralded: bool


@dataclass
class Branch:
    events: tuple  # DetectEvent chain
    mu: MALDensity


@dataclass
class SimulationResult:
    ir: CircuitIR
    gram: GramMatrix
    branches: list
    table: dict  # concatenated unheralded counts tuple -> joint probability
    pattern_modes: tuple  # detect-mode tuples for unheralded events, in order
    herald_probability: float  # joint probability of all heralded events
    space: SpaceReport
    metadata: dict
    resolved: ExternalDensity | None = None
    fidelity_value: float | None = None
    expectations: dict = field(default_factory=dict)

    def final_state(self) -> MALDensity:
        if len(self.branches) != 1:
            raise InvalidIR("result is a mixture; post-select a branch first")
        return self.branches[0].mu

    def final_mixture(self) -> HeraldedMixture:
        """Mixture over the last unheralded detect event."""
        if not self.pattern_modes:
            raise InvalidIR("circuit has no unheralded detect event")
        modes = self.pattern_modes[-1]
        branches = {}
        for br in self.branches:
            last = br.events[-1]
            if last.heralded or last.modes != modes:
                raise InvalidIR("final event is not the unheralded detect")
            key = DetectionPattern(modes=modes, counts=last.counts)
            mass = _branch_mass(br, self.gram)
            branches[key] = (mass, br.mu)
        return HeraldedMixture(modes=modes, branches=branches)

    def postselected(self, counts) -> tuple:
        """(probability, normalized remainder) for a final-detect pattern."""
        return postselect(self.final_mixture(), counts)


def _branch_mass(branch: Branch, gram: GramMatrix) -> float:
    return float(sum(detection_probabilities(branch.mu, gram).values()))


def run(ir: CircuitIR, options: RunOptions = RunOptions()) -> SimulationResult:
    """Execute the circuit and gather tables, reports and optional resolution."""
    validate_ir(ir)
    spec = ir.gram_spec
    if options.seed is not None and spec.kind == "normal":
        ir = replace(ir, gram_spec=replace(spec, seed=options.seed))
    gram, gram_meta = photon_gram(ir, tol=options.tol)
    n_modes = ir.n_modes
    prune = options.prune
    branches = [Branch(events=(), mu=None)]
    peak_dim = 1
    for op in ir.ops:
        if isinstance(op, Inject):
            for br in branches:
                if br.mu is None:
                    basis = build_basis([(op.mode,)], n_modes, cap=options.dim_cap)
                    br.mu = init_pure((op.mode,), basis)
                else:
                    br.mu = br.mu.with_photon_appended(op.mode)
        elif isinstance(op, BeamSplitterOp):
            u1 = beam_splitter(op.theta, op.m1, op.m2, n_modes)
            for br in branches:
                br.mu = apply_unitary(br.mu, u1, prune=prune)
        elif isinstance(op, PhaseOp):
            u1 = phase_shift(op.phi, op.mode, n_modes)
            for br in branches:
                br.mu = apply_unitary(br.mu, u1, prune=prune)
        elif isinstance(op, LossOp):
            elem = LossElement(mode=op.mode, eta=op.eta)
            for br in branches:
                br.mu = apply_loss(br.mu, elem, gram, prune=prune)
        elif isinstance(op, DetectOp):
            new_branches = []
            for br in branches:
                mix = trace_out_modes(br.mu, op.modes, gram)
                if op.herald is not None:
                    key = DetectionPattern(modes=op.modes, counts=op.herald)
                    hit = mix.branches.get(key)
                    if hit is None:
                        continue
                    prob, mu = hit
                    if prob <= 1e-15:
                        continue
                    new_branches.append(Branch(
                        events=br.events + (DetectEvent(op.modes, op.herald, True),),
                        mu=mu))
                else:
                    for key, (prob, mu) in mix.branches.items():
                        if prob <= 0.0:
                            continue
                        new_branches.append(Branch(
                            events=br.events + (DetectEvent(op.modes, key.counts,
                                                            False),),
                            mu=mu))
            if not new_branches:
                raise HeraldImpossible(
                    f"herald {op.herald} on modes {op.modes} never occurs")
            branches = new_branches
        for br in branches:
            if br.mu is not None:
                peak_dim = max(peak_dim, br.mu.basis.dim)

    report = space_report(ir)
    gram_meta.update(prune=prune, tol=options.tol, peak_dim_run=peak_dim)

    # assemble result tables
    pattern_modes = tuple(
        op.modes for op in ir.ops
        if isinstance(op, DetectOp) and op.herald is None
    )
    table: dict = {}
    total_mass = 0.0
    for br in branches:
        mass = _branch_mass(br, gram)
        total_mass += mass
        key = tuple(
            c for ev in br.events if not ev.heralded for c in ev.counts
        )
        if pattern_modes:
            table[key] = table.get(key, 0.0) + mass
    if not pattern_modes:
        # no unheralded detectors: report the final state's own patterns
        assert len(branches) == 1
        probs = detection_probabilities(branches[0].mu, gram)
        pattern_modes = (tuple(range(1, n_modes + 1)),)
        for d, p in probs.items():
            key = d.restricted(range(1, n_modes + 1)).counts
            table[key] = table.get(key, 0.0) + p

    herald_probability = total_mass if any(
        ev.heralded for br in branches for ev in br.events
    ) else 1.0

    result = SimulationResult(
        ir=ir, gram=gram, branches=branches, table=table,
        pattern_modes=pattern_modes, herald_probability=herald_probability,
        space=report, metadata=gram_meta,
    )

    for name, mspec in ir.measure.items():
        result.expectations[name] = _measure_expectation(result, mspec)

    if options.resolve or options.fidelity_vs_ideal:
        if len(branches) != 1:
            raise InvalidIR(
                "resolution requires a single branch; add heralds to the circuit")
        mu = branches[0].mu
        mass = _branch_mass(branches[0], gram)
        normalized = mu.scaled(1.0 / mass) if mass > 0 else mu
        rho = resolve_interference(normalized, gram,
                                   max_photons=options.resolve_photon_cap)
        result.resolved = rho
        if options.fidelity_vs_ideal:
            ideal_ir = ir.without_loss().with_ideal_photons()
            ideal = run(ideal_ir, replace(options, fidelity_vs_ideal=False,
                                          resolve=True, seed=None))
            result.fidelity_value = fidelity(ideal.resolved, rho)
    return result


def _measure_expectation(result: SimulationResult, mspec: MeasureSpec) -> float:
    from .state import expectation

    flat_modes = tuple(m for modes in result.pattern_modes for m in modes)
    probs: dict = {}
    for key, p in result.table.items():
        counts = []
        for m in mspec.modes:
            try:
                counts.append(key[flat_modes.index(m)])
            except ValueError:
                raise CircuitSemanticError(
                    f"measure references mode {m} that is never detected")
        counts = tuple(counts)
        probs[counts] = probs.get(counts, 0.0) + p
    return expectation(probs, mspec.weights)
