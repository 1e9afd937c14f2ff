from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional


class DegenerateInfrastructureError(ValueError):
    """
    Raised when a district has no towers to spread its population over.
    """


@dataclass(frozen=True)
class District:
    name: str
    density: float
    area: float
    towers: int = 0

    def __post_init__(self):
        if self.density < 0:
            raise ValueError(f"density must be >= 0, got {self.density}")
        if self.area <= 0:
            raise ValueError(f"area must be > 0, got {self.area}")
        if self.towers < 0:
            raise ValueError(f"towers must be >= 0, got {self.towers}")


@dataclass(frozen=True)
class SocialProfile:
    population: int
    penetration: float
    platforms_per_user: int

    def __post_init__(self):
        if self.population < 0:
            raise ValueError("population must be >= 0")
        if not 0.0 <= self.penetration <= 1.0:
            raise ValueError(
                f"penetration must be within [0, 1], got {self.penetration}"
            )
        if self.platforms_per_user < 0:
            raise ValueError("platforms_per_user must be >= 0")


@dataclass(frozen=True)
class CostModel:
    """
    Pricing of cellular traffic in abstract cost-units per MB.
    """

    unit_cost: float
    handled_fraction: float
    reduction: float

    def __post_init__(self):
        if self.unit_cost < 0:
            raise ValueError("unit_cost must be >= 0")
        for name in ("handled_fraction", "reduction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")


@dataclass(frozen=True)
class OffloadConfig:
    """
    Access points draining traffic away from the cellular network. Volumes
    are MB per one-second slot.
    """

    ap_count: int
    avg_offload_mb: float
    generated_mb: float
    generated_mb_per_connection: Optional[float] = None

    def __post_init__(self):
        for name in ("ap_count", "avg_offload_mb", "generated_mb"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if (
            self.generated_mb_per_connection is not None
            and self.generated_mb_per_connection < 0
        ):
            raise ValueError("generated_mb_per_connection must be >= 0")


def district_population(d: District) -> float:
    return d.density * d.area


def persons_per_tower(population: float, towers: int) -> float:
    if towers <= 0:
        raise DegenerateInfrastructureError(
            "persons per tower is undefined for a district without towers"
        )
    return population / towers


def active_connections(s: SocialProfile) -> float:
    return s.penetration * s.population * s.platforms_per_user


def baseline_cost(volume_mb: float, c: CostModel) -> float:
    """Cost of the handled share of a volume before any reduction."""
    if volume_mb < 0:
        raise ValueError("volume_mb must be >= 0")
    return c.handled_fraction * volume_mb * c.unit_cost


def reduced_cost(baseline: float, c: CostModel) -> float:
    if baseline < 0:
        raise ValueError("baseline must be >= 0")
    return baseline * (1 - c.reduction)


def display_cost(cost: float) -> int:
    """
    Rounds half-up to whole cost-units (9562.5 -> 9563).
    """
    return int(Decimal(repr(cost)).quantize(Decimal(1), ROUND_HALF_UP))


def offloaded_volume(o: OffloadConfig) -> float:
    """Offloaded MB per slot, never more than what was generated."""
    return min(o.ap_count * o.avg_offload_mb, o.generated_mb)


def offload_ratio(offloaded: float, generated: float) -> float:
    if generated <= 0:
        raise ValueError("offload ratio is undefined without generated volume")
    return offloaded / generated
