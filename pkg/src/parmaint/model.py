"""Component catalogs and problem instances.

An instance is a catalog of machine component types (failure/repair
rates and the various costs) together with linear purchase constraints
``A x <= b`` on the number of copies installed per type.  Internally
components are kept sorted by ascending usage cost so that position in
the catalog is also usage priority; the original catalog order is
retained for reporting.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "ComponentType",
    "Instance",
    "InstanceError",
    "derive_failure_rate",
    "load_instance",
    "make_instance",
    "instance_document",
    "write_instance",
    "tightened_copy_bound",
]


class InstanceError(ValueError):
    """Raised when an instance document fails validation."""


def derive_failure_rate(reliability: float, repair_rate: float) -> float:
    """Failure rate of a unit with given steady-state availability.

    A single always-repaired unit alternates between working and being
    repaired; its long-run fraction of time in working order is
    ``tau / (tau + alpha)``.  Given that availability and the repair
    rate ``tau``, the failure rate is ``alpha = tau (1 - p) / p``.
    """
    if not 0.0 < reliability < 1.0:
        raise InstanceError(f"reliability must lie in (0, 1), got {reliability}")
    if repair_rate <= 0.0:
        raise InstanceError(f"repair rate must be positive, got {repair_rate}")
    return repair_rate * (1.0 - reliability) / reliability


@dataclass(frozen=True)
class ComponentType:
    """One machine type from the purchase catalog."""

    alpha: float  # failure rate of a working unit
    tau: float  # repair completion rate of a unit under repair
    usage_cost: float  # cost rate while a unit of this type is the one in use
    repair_cost: float  # cost rate per unit of this type under repair
    install_cost: float  # purchase price (knapsack coefficient)
    weight: float  # weight (second knapsack coefficient)
    label: str = ""

    def __post_init__(self):
        if self.alpha <= 0.0 or not math.isfinite(self.alpha):
            raise InstanceError(f"failure rate must be positive, got {self.alpha}")
        if self.tau <= 0.0 or not math.isfinite(self.tau):
            raise InstanceError(f"repair rate must be positive, got {self.tau}")
        for name in ("usage_cost", "repair_cost", "install_cost", "weight"):
            val = getattr(self, name)
            if val < 0.0 or not math.isfinite(val):
                raise InstanceError(f"{name} must be non-negative, got {val}")

    @property
    def reliability(self) -> float:
        """Long-run availability of one always-repaired unit."""
        return self.tau / (self.tau + self.alpha)

    @property
    def unavailability(self) -> float:
        return self.alpha / (self.tau + self.alpha)


@dataclass(frozen=True, eq=False)
class Instance:
    """A validated catalog plus purchase constraints, in canonical order.

    ``components`` are sorted by ascending usage cost (ties keep catalog
    order), so lower index means higher usage priority.  ``constraints``
    columns follow the same order.  ``catalog_order[i]`` gives the
    original catalog position of canonical slot ``i``.
    """

    components: tuple[ComponentType, ...]
    constraints: np.ndarray  # shape (R, N), non-negative
    constraint_bounds: np.ndarray  # shape (R,), non-negative
    constraint_names: tuple[str, ...]
    catalog_order: tuple[int, ...]
    copy_bounds: tuple[int, ...]

    @property
    def n_types(self) -> int:
        return len(self.components)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.components)

    def q_vector(self) -> np.ndarray:
        return np.array([c.unavailability for c in self.components])

    def ln_q_vector(self) -> np.ndarray:
        return np.log(self.q_vector())

    def usage_costs(self) -> np.ndarray:
        return np.array([c.usage_cost for c in self.components])

    def repair_costs(self) -> np.ndarray:
        return np.array([c.repair_cost for c in self.components])

    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.components])

    def taus(self) -> np.ndarray:
        return np.array([c.tau for c in self.components])

    def is_feasible(self, design) -> bool:
        """Whether a design (canonical-order copy counts) fits the budget."""
        x = np.asarray(design, dtype=float)
        if x.shape != (self.n_types,) or np.any(x < 0):
            return False
        return bool(np.all(self.constraints @ x <= self.constraint_bounds + 1e-9))

    def to_catalog(self, design) -> tuple[int, ...]:
        """Reorder canonical copy counts back to catalog positions."""
        out = [0] * self.n_types
        for slot, count in enumerate(design):
            out[self.catalog_order[slot]] = int(count)
        return tuple(out)

    def from_catalog(self, counts) -> tuple[int, ...]:
        """Canonical copy counts from catalog-ordered ones."""
        if len(counts) != self.n_types:
            raise InstanceError(
                f"expected {self.n_types} copy counts, got {len(counts)}"
            )
        return tuple(int(counts[pos]) for pos in self.catalog_order)

    def modified(self, usage_costs=None, repair_costs=None, rate_multipliers=None):
        """A new instance with catalog-ordered parameter overrides applied.

        ``rate_multipliers`` scales both alpha and tau of each type, which
        rescales that type's local time without moving its availability.
        The result is re-canonicalized, since usage-cost edits can change
        the priority order.
        """
        catalog = [None] * self.n_types
        for slot, comp in enumerate(self.components):
            catalog[self.catalog_order[slot]] = comp
        for name, values in (("usage_cost", usage_costs), ("repair_cost", repair_costs)):
            if values is None:
                continue
            if len(values) != self.n_types:
                raise InstanceError(f"need {self.n_types} values for {name}")
            catalog = [replace(c, **{name: float(v)}) for c, v in zip(catalog, values)]
        if rate_multipliers is not None:
            if len(rate_multipliers) != self.n_types:
                raise InstanceError(f"need {self.n_types} rate multipliers")
            for m in rate_multipliers:
                if m <= 0 or not math.isfinite(m):
                    raise InstanceError(f"rate multipliers must be positive, got {m}")
            catalog = [
                replace(c, alpha=c.alpha * float(m), tau=c.tau * float(m))
                for c, m in zip(catalog, rate_multipliers)
            ]
        a_catalog = np.zeros_like(self.constraints)
        for slot in range(self.n_types):
            a_catalog[:, self.catalog_order[slot]] = self.constraints[:, slot]
        return make_instance(
            catalog, a_catalog, self.constraint_bounds, self.constraint_names
        )


def _analytic_copy_bound(q, repair_cost, usage_cost, top_usage_cost, delta):
    """Copy count beyond which extra copies cannot pay off, or None/inf.

    Derived from the single-type relaxation of the penalized static
    objective ``r q x + c (1 - q^x) + (1 + delta) c_top q^x``, which is
    convex in x with minimizer
    ``x* = ln(-q r / (((1+delta) c_top - c) ln q)) / ln q``.
    Returns None when the coefficient ``(1+delta) c_top - c`` is not
    positive (no interior minimizer), and +inf when repair is free.
    """
    margin = (1.0 + delta) * top_usage_cost - usage_cost
    if margin <= 0.0:
        return None
    if repair_cost <= 0.0:
        return math.inf
    lnq = math.log(q)
    t = (-q * repair_cost) / (margin * lnq)
    return max(0, math.ceil(math.log(t) / lnq))


def tightened_copy_bound(instance: Instance, index: int, epsilon: float, delta: float) -> int:
    """Largest copy count of one type worth enumerating at this (epsilon, delta).

    Combines the analytic single-type bound with the number of copies at
    which the type alone already meets the log-failure-rate target
    ``epsilon``, then caps with the knapsack bound.  When the analytic
    bound does not exist the knapsack bound is used with a warning.
    """
    comp = instance.components[index]
    knapsack = instance.copy_bounds[index]
    lnq = math.log(comp.unavailability)
    eps_term = max(0, math.ceil(epsilon / lnq))
    top_cost = max(c.usage_cost for c in instance.components)
    analytic = _analytic_copy_bound(
        comp.unavailability, comp.repair_cost, comp.usage_cost, top_cost, delta
    )
    if analytic is None:
        warnings.warn(
            f"no analytic copy bound for type {comp.label!r} "
            f"((1+delta) max usage cost does not exceed its usage cost); "
            f"falling back to the knapsack bound",
            stacklevel=2,
        )
        return knapsack
    if analytic is math.inf:
        return knapsack
    return min(max(analytic, eps_term), knapsack)


def make_instance(components, constraints, bounds, names=None) -> Instance:
    """Validate and canonicalize a catalog given in catalog order."""
    comps = list(components)
    if not comps:
        raise InstanceError("instance has an empty component catalog")
    n = len(comps)
    a = np.asarray(constraints, dtype=float)
    if a.ndim != 2 or a.shape[1] != n:
        raise InstanceError(
            f"constraint matrix must have one column per component type, "
            f"got shape {a.shape} for {n} types"
        )
    b = np.asarray(bounds, dtype=float).reshape(-1)
    if b.shape[0] != a.shape[0]:
        raise InstanceError(
            f"got {a.shape[0]} constraint rows but {b.shape[0]} bounds"
        )
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise InstanceError("constraint coefficients must be finite and non-negative")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise InstanceError("constraint bounds must be finite and non-negative")
    if names is None:
        names = tuple(f"row{j}" for j in range(a.shape[0]))
    names = tuple(str(s) for s in names)
    if len(names) != a.shape[0]:
        raise InstanceError("one name per constraint row required")

    comps = [
        replace(c, label=c.label or str(pos + 1)) for pos, c in enumerate(comps)
    ]
    labels = [c.label for c in comps]
    if len(set(labels)) != len(labels):
        raise InstanceError(f"duplicate component labels: {labels}")
    for lab in labels:
        if any(ch.isspace() for ch in lab):
            raise InstanceError(f"component label {lab!r} contains whitespace")

    # stable sort by usage cost: canonical index == usage priority
    order = sorted(range(n), key=lambda i: (comps[i].usage_cost, i))
    comps_sorted = tuple(comps[i] for i in order)
    a_sorted = a[:, order]

    top_cost = max(c.usage_cost for c in comps_sorted)
    copy_bounds = []
    for i, comp in enumerate(comps_sorted):
        rows = np.nonzero(a_sorted[:, i] > 0)[0]
        if rows.size:
            bound = int(min(math.floor(b[j] / a_sorted[j, i] + 1e-12) for j in rows))
        else:
            # type untouched by every knapsack row: only acceptable when the
            # analytic bound is finite, otherwise the state space is unbounded
            analytic = _analytic_copy_bound(
                comp.unavailability, comp.repair_cost, comp.usage_cost, top_cost, 0.1
            )
            if analytic is None or analytic is math.inf:
                raise InstanceError(
                    f"component type {comp.label!r} is not limited by any "
                    f"constraint row and has no finite analytic copy bound"
                )
            bound = int(analytic)
        copy_bounds.append(bound)

    a_sorted.setflags(write=False)
    b.setflags(write=False)
    return Instance(
        components=comps_sorted,
        constraints=a_sorted,
        constraint_bounds=b,
        constraint_names=names,
        catalog_order=tuple(order),
        copy_bounds=tuple(copy_bounds),
    )


_COMPONENT_KEYS = {
    "p",
    "reliability",
    "alpha",
    "tau",
    "usage_cost",
    "repair_cost",
    "install_cost",
    "weight",
}


def _component_from_record(rec: dict, position: int) -> ComponentType:
    unknown = set(rec) - _COMPONENT_KEYS - {"label"}
    if unknown:
        raise InstanceError(f"unknown component fields {sorted(unknown)}")
    missing = {"tau", "usage_cost", "repair_cost", "install_cost", "weight"} - set(rec)
    if missing:
        raise InstanceError(
            f"component {rec.get('label', position + 1)!r} is missing "
            f"fields {sorted(missing)}"
        )
    tau = float(rec["tau"])
    p = rec.get("p", rec.get("reliability"))
    alpha = rec.get("alpha")
    if p is None and alpha is None:
        raise InstanceError(
            f"component {rec.get('label', position + 1)!r} needs either a "
            f"failure rate (alpha) or a reliability (p)"
        )
    if p is not None:
        derived = derive_failure_rate(float(p), tau)
        if alpha is not None and abs(float(alpha) - derived) > 1e-9:
            raise InstanceError(
                f"component {rec.get('label', position + 1)!r} gives both "
                f"alpha={alpha} and p={p}, which disagree"
            )
        alpha = derived
    return ComponentType(
        alpha=float(alpha),
        tau=tau,
        usage_cost=float(rec["usage_cost"]),
        repair_cost=float(rec["repair_cost"]),
        install_cost=float(rec["install_cost"]),
        weight=float(rec["weight"]),
        label=str(rec.get("label", "")),
    )


def _instance_from_document(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceError(f"expected a mapping document, got {type(doc).__name__}")
    comps = doc.get("components")
    if not comps:
        raise InstanceError("document has no components")
    components = [_component_from_record(rec, i) for i, rec in enumerate(comps)]
    rows = doc.get("constraints", [])
    n = len(components)
    a = np.zeros((len(rows), n))
    b = np.zeros(len(rows))
    names = []
    for j, row in enumerate(rows):
        coeffs = row.get("coefficients")
        if coeffs is None or "bound" not in row:
            raise InstanceError(f"constraint row {j} needs coefficients and a bound")
        if len(coeffs) != n:
            raise InstanceError(
                f"constraint {row.get('name', j)!r} has {len(coeffs)} "
                f"coefficients for {n} component types"
            )
        a[j] = [float(v) for v in coeffs]
        b[j] = float(row["bound"])
        names.append(str(row.get("name", f"row{j}")))
    return make_instance(components, a, b, names)


def _parse_kv_tokens(tokens, where):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise InstanceError(f"expected key=value token in {where}, got {tok!r}")
        key, _, val = tok.partition("=")
        out[key.strip()] = val.strip()
    return out


def _instance_from_table(text: str) -> Instance:
    comps = []
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        if kind == "component":
            if len(parts) < 3:
                raise InstanceError(f"line {lineno}: component needs a label and fields")
            rec = _parse_kv_tokens(parts[2:], f"line {lineno}")
            rec["label"] = parts[1]
            comps.append(rec)
        elif kind == "constraint":
            if len(parts) < 3:
                raise InstanceError(f"line {lineno}: constraint needs a name and fields")
            kv = _parse_kv_tokens(parts[2:], f"line {lineno}")
            if "bound" not in kv or "coeffs" not in kv:
                raise InstanceError(f"line {lineno}: constraint needs bound= and coeffs=")
            rows.append(
                {
                    "name": parts[1],
                    "bound": float(kv["bound"]),
                    "coefficients": [float(v) for v in kv["coeffs"].split(",")],
                }
            )
        else:
            raise InstanceError(f"line {lineno}: unknown record kind {parts[0]!r}")
    return _instance_from_document({"components": comps, "constraints": rows})


def load_instance(source) -> Instance:
    """Load an instance from a file path or an already-parsed document.

    Two file encodings are accepted and interchangeable: a JSON document
    (``{"components": [...], "constraints": [...]}``) and a line-oriented
    table (``component``/``constraint`` records with key=value fields).
    The encoding is detected from the content.
    """
    if isinstance(source, dict):
        return _instance_from_document(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InstanceError(f"cannot read instance file {path}: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}: invalid JSON: {exc}") from exc
        return _instance_from_document(doc)
    return _instance_from_table(text)


def instance_document(instance: Instance) -> dict:
    """Catalog-ordered plain document for an instance (JSON-ready)."""
    n = instance.n_types
    comps = [None] * n
    a = np.zeros_like(instance.constraints)
    for slot in range(n):
        pos = instance.catalog_order[slot]
        comps[pos] = instance.components[slot]
        a[:, pos] = instance.constraints[:, slot]
    return {
        "components": [
            {
                "label": c.label,
                "alpha": c.alpha,
                "tau": c.tau,
                "usage_cost": c.usage_cost,
                "repair_cost": c.repair_cost,
                "install_cost": c.install_cost,
                "weight": c.weight,
            }
            for c in comps
        ],
        "constraints": [
            {
                "name": instance.constraint_names[j],
                "coefficients": list(a[j]),
                "bound": float(instance.constraint_bounds[j]),
            }
            for j in range(a.shape[0])
        ],
    }


def write_instance(instance: Instance, path, form: str = "json") -> None:
    doc = instance_document(instance)
    path = Path(path)
    if form == "json":
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return
    if form != "table":
        raise InstanceError(f"unknown instance format {form!r}")
    lines = ["# parallel-system instance"]
    for rec in doc["components"]:
        fields = " ".join(
            f"{k}={rec[k]:.12g}"
            for k in ("alpha", "tau", "usage_cost", "repair_cost", "install_cost", "weight")
        )
        lines.append(f"component {rec['label']} {fields}")
    for row in doc["constraints"]:
        coeffs = ",".join(f"{v:.12g}" for v in row["coefficients"])
        lines.append(f"constraint {row['name']} bound={row['bound']:.12g} coeffs={coeffs}")
    path.write_text("\n".join(lines) + "\n")
