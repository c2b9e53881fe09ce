"""Request/response models for the simulation service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class CircuitDocument(BaseModel):
    """Raw circuit description in the on-disk JSON format."""

    modes: int
    gram: dict[str, Any] = Field(default_factory=lambda: {"uniform_visibility": 1.0})
    ops: list[dict[str, Any]] = Field(default_factory=list)
    measure: dict[str, Any] | None = None

    def as_dict(self) -> dict:
        doc = {"modes": self.modes, "gram": self.gram, "ops": self.ops}
        if self.measure is not None:
            doc["measure"] = self.measure
        return doc


class RunRequest(BaseModel):
    circuit: CircuitDocument
    seed: int | None = None
    prune_threshold: float = 0.0
    dim_cap: int | None = None
    resolve: bool = False
    fidelity_vs_ideal: bool = False


class DensityEntry(BaseModel):
    row: int
    col: int
    re: float
    im: float


class DensityPayload(BaseModel):
    basis: list[list[int]]
    entries: list[DensityEntry]


class RunResponse(BaseModel):
    patterns: dict[str, float]
    pattern_modes: list[list[int]]
    herald_probability: float
    expectations: dict[str, float] = Field(default_factory=dict)
    fidelity: float | None = None
    density: DensityPayload | None = None
    report: dict[str, Any]
    metadata: dict[str, Any]


class ReportRequest(BaseModel):
    circuit: CircuitDocument


class ReportResponse(BaseModel):
    report: dict[str, Any]
    metadata: dict[str, Any]


class CompareRequest(BaseModel):
    circuit: CircuitDocument
    tolerance: float = 1e-8
    dense_cap: int | None = None


class CompareResponse(BaseModel):
    max_probability_diff: float
    max_density_diff: float
    patterns_checked: int
    cells_checked: int
    passed: bool
    metadata: dict[str, Any]


class SweepRequest(BaseModel):
    circuit: CircuitDocument
    parameter: str
    grid: list[float]
    seed: int | None = None
    jobs: int = 1


class SweepPoint(BaseModel):
    value: float
    herald_probability: float
    fidelity: float | None = None
    expectations: dict[str, float] = Field(default_factory=dict)


class SweepResponse(BaseModel):
    parameter: str
    points: list[SweepPoint]
    metadata: dict[str, Any]
