"""Shared domain types: design spaces, points, metrics, and the run dataset.

All types are immutable values except :class:`Dataset`, which is append-only.
Parameter values are stored in SI base units (meters, ohms, farads); metric
values are stored in the reporting units of the active FOM configuration
(dB, MHz, degrees, uW, mV).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Sequence


class StructuralError(ValueError):
    """A value does not have the shape its container requires."""


class EmptyDatasetError(ValueError):
    """An operation that needs at least one record got an empty dataset."""


class RangeError(ValueError):
    """A coordinate fell outside its parameter's allowed interval."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class Scale(str, Enum):
    LINEAR = "linear"
    LOG = "logarithmic"


class Source(str, Enum):
    """Which proposer produced an evaluated point."""

    LLM_INIT = "llm_init"
    LLM = "llm"
    GP_BO = "gp_bo"
    RANDOM = "random"


class Region(str, Enum):
    CUTOFF = "cutoff"
    TRIODE = "triode"
    SATURATION = "saturation"


@dataclass(frozen=True)
class Parameter:
    """A named, bounded design variable.

    ``scale`` controls how the surrogate maps the parameter onto the unit
    cube: variables spanning several decades (widths, resistances,
    capacitances) use a logarithmic map, short linear ranges (lengths) stay
    linear. ``unit`` is the SI base unit used for display only.
    """

    name: str
    lower: float
    upper: float
    scale: Scale = Scale.LINEAR
    unit: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if not self.lower < self.upper:
            raise ValueError(
                f"{self.name}: lower bound {self.lower} must be < upper {self.upper}"
            )
        if self.scale is Scale.LOG and self.lower <= 0:
            raise ValueError(f"{self.name}: logarithmic scale requires lower > 0")


@dataclass(frozen=True)
class DesignSpace:
    """An ordered list of parameters defining the searchable box."""

    parameters: tuple[Parameter, ...]

    def __post_init__(self) -> None:
        if len(self.parameters) < 1:
            raise ValueError("design space needs at least one parameter")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {names}")

    @property
    def dimension(self) -> int:
        return len(self.parameters)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def parameter(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def index(self, name: str) -> int:
        for i, p in enumerate(self.parameters):
            if p.name == name:
                return i
        raise KeyError(name)


@dataclass(frozen=True)
class DesignPoint:
    """A concrete assignment, one value per parameter, in SI units."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def value(self, space: DesignSpace, name: str) -> float:
        return self.values[space.index(name)]


# Metric vectors and region reports are plain mappings; their shape is
# enforced where they are consumed (FOM arithmetic, record construction).
MetricVector = Mapping[str, float]
DeviceRegionReport = Mapping[str, Region]


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated design point with its metrics, regions, and FOM.

    ``iteration`` 0 is reserved for initialization records. ``fom`` must
    equal the FOM recomputed from ``metrics`` under the active configuration;
    the evaluator guarantees this at construction time.
    """

    point: DesignPoint
    metrics: MetricVector
    regions: DeviceRegionReport
    simulation_ok: bool
    fom: float
    source: Source
    iteration: int

    def __post_init__(self) -> None:
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")


class Dataset:
    """Insertion-ordered, append-only collection of evaluation records."""

    __slots__ = ("_records",)

    def __init__(self, records: Sequence[EvalRecord] = ()) -> None:
        self._records: list[EvalRecord] = list(records)

    @property
    def records(self) -> tuple[EvalRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EvalRecord]:
        return iter(self._records)

    def __getitem__(self, index: int) -> EvalRecord:
        return self._records[index]


def design_space_contains(space: DesignSpace, point: DesignPoint) -> bool:
    """True iff every coordinate lies within its parameter's closed interval."""
    if len(point) != space.dimension:
        raise StructuralError(
            f"point has {len(point)} values, space has dimension {space.dimension}"
        )
    return all(
        p.lower <= v <= p.upper for p, v in zip(space.parameters, point.values)
    )


def dataset_append(dataset: Dataset, record: EvalRecord) -> Dataset:
    """Append one record; existing records are never touched."""
    dataset._records.append(record)
    return dataset


def dataset_best(dataset: Dataset) -> EvalRecord:
    """The record with maximal FOM; ties go to the earliest insertion."""
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset_best needs at least one record")
    best = dataset[0]
    for record in dataset:
        if record.fom > best.fom:
            best = record
    return best
