"""Norms, morality chains, lexicographic weights and the morality metric."""

from __future__ import annotations

import enum
import numbers
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

DEFAULT_BETA = Fraction(1, 100)

CATEGORIES = ("action", "outcome", "causal", "utility")
SUBJECT_KINDS = ("human", "animal", "robot", "agent")

# Pattern each category detects when no explicit signature is given.
DEFAULT_SIGNATURES = {
    "action": "push",
    "outcome": "harm",
    "causal": "personal_harm",
    "utility": "harm_count",
}
SIGNATURES = {
    "action": ("push",),
    "outcome": ("harm", "landmark"),
    "causal": ("personal_harm", "caused_harm"),
    "utility": ("harm_count",),
}


class MoralityError(ValueError):
    """Raised for out-of-domain inputs to the morality formalism."""


class ChainError(MoralityError):
    """Raised when a set of norms cannot form a chain."""


class DeonticModality(str, enum.Enum):
    PRESCRIBED = "prescribed"
    PROHIBITED = "prohibited"

    @property
    def as_bool(self) -> bool:
        return self is DeonticModality.PRESCRIBED


@dataclass(frozen=True)
class NormSpec:
    """A single norm: what pattern it watches, how strongly, and in which direction.

    ``utility_range`` may be left unset on chain templates; it is bound to a
    concrete scenario by :func:`moralgrid.scenarios.bind_ranges`.
    """

    id: str
    category: str
    force: int
    modality: DeonticModality = DeonticModality.PROHIBITED
    subject_kind: str | None = None
    utility_range: tuple[float, float] | None = None
    signature: str = ""
    description: str = ""

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise MoralityError(f"norm {self.id!r}: unknown category {self.category!r}")
        if not isinstance(self.force, int) or isinstance(self.force, bool) or self.force < 1:
            raise MoralityError(f"norm {self.id!r}: force must be a positive integer")
        if not isinstance(self.modality, DeonticModality):
            object.__setattr__(self, "modality", DeonticModality(self.modality))
        if self.subject_kind is not None and self.subject_kind not in SUBJECT_KINDS:
            raise MoralityError(f"norm {self.id!r}: unknown subject kind {self.subject_kind!r}")
        if not self.signature:
            object.__setattr__(self, "signature", DEFAULT_SIGNATURES[self.category])
        if self.signature not in SIGNATURES[self.category]:
            raise MoralityError(
                f"norm {self.id!r}: signature {self.signature!r} not valid for {self.category}"
            )
        if self.utility_range is not None:
            if self.category != "utility":
                raise MoralityError(f"norm {self.id!r}: only utility norms carry a range")
            lo, hi = self.utility_range
            if not lo < hi:
                raise MoralityError(f"norm {self.id!r}: utility range needs u_min < u_max")
            object.__setattr__(self, "utility_range", (lo, hi))

    @property
    def is_utility(self) -> bool:
        return self.category == "utility"

    def with_range(self, lo: float, hi: float) -> NormSpec:
        return replace(self, utility_range=(lo, hi))

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "category": self.category,
            "force": self.force,
            "modality": self.modality.value,
            "signature": self.signature,
        }
        if self.subject_kind is not None:
            d["kind"] = self.subject_kind
        if self.utility_range is not None:
            d["range"] = list(self.utility_range)
        if self.description:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> NormSpec:
        rng = d.get("range")
        return cls(
            id=d["id"],
            category=d["category"],
            force=d["force"],
            modality=DeonticModality(d.get("modality", "prohibited")),
            subject_kind=d.get("kind"),
            utility_range=tuple(rng) if rng is not None else None,
            signature=d.get("signature", ""),
            description=d.get("description", ""),
        )


@dataclass(frozen=True)
class MoralityChain:
    name: str
    norms: tuple[NormSpec, ...]

    def __post_init__(self):
        if not self.norms:
            raise ChainError("a morality chain needs at least one norm")
        forces = [n.force for n in self.norms]
        if any(a <= b for a, b in zip(forces, forces[1:])):
            raise ChainError(f"chain {self.name!r}: forces must be strictly decreasing, got {forces}")
        ids = [n.id for n in self.norms]
        if len(set(ids)) != len(ids):
            raise ChainError(f"chain {self.name!r}: duplicate norm ids")

    def __len__(self) -> int:
        return len(self.norms)

    def __iter__(self):
        return iter(self.norms)

    @property
    def ids(self) -> list[str]:
        return [n.id for n in self.norms]

    def index(self, norm_id: str) -> int:
        for i, n in enumerate(self.norms):
            if n.id == norm_id:
                return i
        raise KeyError(norm_id)

    def get(self, norm_id: str) -> NormSpec:
        return self.norms[self.index(norm_id)]

    def to_dict(self) -> dict:
        return {"name": self.name, "norms": [n.to_dict() for n in self.norms]}


@dataclass(frozen=True)
class ChainWeights:
    beta: Fraction
    exact: tuple[Fraction, ...]
    weights: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.exact))

    def __len__(self) -> int:
        return len(self.exact)

    @property
    def total(self) -> Fraction:
        return sum(self.exact, Fraction(0))


@dataclass(frozen=True)
class AdherenceEstimate:
    rho: float
    sample_count: int = 1
    exact: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise MoralityError(f"adherence {self.rho} outside [0, 1]")


def as_fraction(value) -> Fraction:
    """Exact rational view of ``value``; floats go through their shortest repr so 0.01 -> 1/100."""
    if isinstance(value, numbers.Rational):
        return Fraction(value)
    if isinstance(value, numbers.Real) or hasattr(value, "__float__"):
        return Fraction(repr(float(value)))
    return Fraction(value)


def morality_function(norm: NormSpec, adherence: AdherenceEstimate | float) -> float:
    rho = adherence.rho if isinstance(adherence, AdherenceEstimate) else float(adherence)
    if not 0.0 <= rho <= 1.0:
        raise MoralityError(f"adherence {rho} outside [0, 1] for norm {norm.id!r}")
    if norm.modality is DeonticModality.PRESCRIBED:
        return rho
    return 1.0 - rho


def build_chain(name: str, norms: Iterable[NormSpec]) -> MoralityChain:
    """Order ``norms`` by descending force; equal forces are an error."""
    norms = list(norms)
    by_force: dict[int, NormSpec] = {}
    for n in norms:
        if n.force in by_force:
            raise ChainError(
                f"norms {by_force[n.force].id!r} and {n.id!r} share force {n.force}"
            )
        by_force[n.force] = n
    return MoralityChain(name, tuple(sorted(norms, key=lambda n: -n.force)))


def compute_weights(chain: MoralityChain | int, beta=DEFAULT_BETA) -> ChainWeights:
    """Recursive lexicographic weights, lowest priority first.

    ``w_k = 1`` and ``w_{i-1} = (sum_{j>=i} w_j + 1) / beta``. Arithmetic is done
    in fractions so the beta-resolution guarantee survives long chains.
    """
    k = chain if isinstance(chain, int) else len(chain)
    if k < 1:
        raise MoralityError("chain length must be >= 1")
    b = as_fraction(beta)
    if not 0 < b <= 1:
        raise MoralityError(f"beta must lie in (0, 1], got {beta}")
    weights = [Fraction(1)]
    tail = Fraction(1)
    for _ in range(k - 1):
        w = (tail + 1) / b
        weights.append(w)
        tail += w
    weights.reverse()
    return ChainWeights(b, tuple(weights))


def morality_metric(
    chain: MoralityChain,
    weights: ChainWeights,
    per_norm_m: Sequence[float] | Mapping[str, float],
    subset: Iterable[str] | None = None,
    exact: bool = False,
):
    """Weighted mean of per-norm morality values.

    ``per_norm_m`` is either a sequence aligned with the chain or a mapping
    keyed by norm id. With ``subset`` the weights are renormalised over the
    selected norms only. ``exact=True`` returns a :class:`Fraction`, which is
    needed to compare metrics that differ below float resolution.
    """
    if isinstance(per_norm_m, Mapping):
        missing = [i for i in chain.ids if i not in per_norm_m]
        if missing:
            raise MoralityError(f"missing morality values for {missing}")
        values = [per_norm_m[i] for i in chain.ids]
    else:
        values = list(per_norm_m)
    if len(values) != len(chain) or len(weights) != len(chain):
        raise MoralityError(
            f"expected {len(chain)} morality values and weights, got {len(values)} and {len(weights)}"
        )
    for nid, v in zip(chain.ids, values):
        if not 0.0 <= v <= 1.0:
            raise MoralityError(f"morality value {v} for {nid!r} outside [0, 1]")
    if subset is None:
        selected = list(range(len(chain)))
    else:
        subset = set(subset)
        unknown = subset - set(chain.ids)
        if unknown:
            raise MoralityError(f"subset names norms not in chain: {sorted(unknown)}")
        if not subset:
            raise MoralityError("subset must not be empty")
        selected = [i for i, nid in enumerate(chain.ids) if nid in subset]
    num = sum((weights.exact[i] * as_fraction(values[i]) for i in selected), Fraction(0))
    den = sum((weights.exact[i] for i in selected), Fraction(0))
    result = num / den
    return result if exact else float(result)
