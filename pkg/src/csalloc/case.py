"""CSA-aware case file: typed domain objects, parsing, validation, serialization.

Unit discipline
---------------
Constraint-side money is held as integer minor units (cents) and all
fractional quantities that feed constraints (haircuts, cap fractions,
prices) as parts-per-million integers, so requirement rounding, cap
slacks and "binding" checks are exact integer arithmetic.  Objective-side
quantities (scenario losses, the lambda/mu/gamma weights) are float64.

The external case file is UTF-8 JSON; :func:`parse_case` reads numbers as
``decimal.Decimal`` and :func:`canonical_json` emits a canonical form
(sorted keys, shortest-roundtrip floats) so that parse -> serialize ->
parse is bit-stable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Mapping, Optional

__all__ = [
    "CaseError",
    "CaseParseError",
    "CaseValidationError",
    "MissingHaircutError",
    "CsaTerms",
    "RegimeSelector",
    "HaircutMatrix",
    "CapSpec",
    "Caps",
    "Window",
    "InventoryItem",
    "ScenarioSet",
    "Weights",
    "WeightsProvenance",
    "SolverLimits",
    "CaseInput",
    "parse_case",
    "case_to_dict",
    "canonical_json",
    "case_hash",
    "lot_valuation",
    "cents_to_dollars",
    "ppm_to_fraction",
]

REGIMES = ("sp", "m1", "m2")
GOVERNING_LAWS = ("NY", "English")
CAP_MODES = ("absolute", "fraction_of_U")

PPM = 1_000_000


class CaseError(Exception):
    """Base class for case-file errors."""


class CaseParseError(CaseError):
    """Schema violation; the message names the offending field path."""


class CaseValidationError(CaseError):
    """Structurally valid input that violates a domain invariant."""


class MissingHaircutError(CaseValidationError):
    """No haircut entry for an (icad, bucket, regime) triple."""

    def __init__(self, icad: str, bucket: str, regime: str):
        self.icad, self.bucket, self.regime = icad, bucket, regime
        super().__init__(
            f"no haircut entry for (icad={icad!r}, bucket={bucket!r}, regime={regime!r})"
        )


# ---------------------------------------------------------------------------
# exact-unit helpers
# ---------------------------------------------------------------------------


def cents_to_dollars(cents: int) -> float:
    return cents / 100.0


def ppm_to_fraction(ppm: int) -> float:
    return ppm / float(PPM)


def _round_half_even(num: int, den: int) -> int:
    """Exact bankers rounding of num/den for positive den."""
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q % 2 == 1):
        return q + 1
    return q


def _as_decimal(value: Any, path: str) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, (int, Decimal)):
        raise CaseParseError(f"{path}: expected a number, got {type(value).__name__}")
    return Decimal(value)


def _to_cents(value: Any, path: str) -> int:
    """Money amount (dollars) -> integer cents; rejects sub-cent inputs."""
    dec = _as_decimal(value, path) * 100
    if dec != dec.to_integral_value():
        raise CaseParseError(f"{path}: money must have at most 2 decimal places")
    return int(dec)


def _to_ppm(value: Any, path: str) -> int:
    """Fraction -> integer parts-per-million; rejects sub-ppm inputs."""
    dec = _as_decimal(value, path) * PPM
    if dec != dec.to_integral_value():
        raise CaseParseError(f"{path}: fraction must have at most 6 decimal places")
    return int(dec)


def _to_float(value: Any, path: str) -> float:
    return float(_as_decimal(value, path))


def _to_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, Decimal) and value == value.to_integral_value():
            return int(value)
        raise CaseParseError(f"{path}: expected an integer")
    return value


def _to_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise CaseParseError(f"{path}: expected a boolean")
    return value


def _to_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise CaseParseError(f"{path}: expected a string")
    return value


def _get(obj: Mapping[str, Any], key: str, path: str, default: Any = ...) -> Any:
    if not isinstance(obj, Mapping):
        raise CaseParseError(f"{path}: expected an object")
    if key not in obj:
        if default is ...:
            raise CaseParseError(f"{path}.{key}: missing required field")
        return default
    return obj[key]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsaTerms:
    """Counterparty terms: exposure offsets and transfer mechanics, in cents."""

    threshold_cents: int
    ia_cents: int
    im_cents: int
    mta_cents: int
    ra_cents: int
    base_currency: str = "USD"
    governing_law: str = "NY"
    bilateral: bool = True

    def validate(self) -> None:
        if self.ra_cents <= 0:
            raise CaseValidationError("csa.terms.ra: rounding amount must be > 0")
        if self.mta_cents < 0:
            raise CaseValidationError("csa.terms.mta: must be >= 0")
        for name, v in (
            ("threshold", self.threshold_cents),
            ("ia", self.ia_cents),
            ("im", self.im_cents),
        ):
            if v < 0:
                raise CaseValidationError(f"csa.terms.{name}: must be >= 0")
        if self.governing_law not in GOVERNING_LAWS:
            raise CaseValidationError(
                f"csa.terms.governing_law: unknown value {self.governing_law!r}"
            )


@dataclass(frozen=True)
class RegimeSelector:
    """Valuation regime with optional per-bucket overrides."""

    default: str = "m1"
    overrides: tuple[tuple[str, str], ...] = ()

    def resolve(self, bucket: str) -> str:
        for b, regime in self.overrides:
            if b == bucket:
                return regime
        return self.default

    def validate(self, known_buckets: frozenset[str]) -> None:
        if self.default not in REGIMES:
            raise CaseValidationError(f"csa.regime.default: unknown regime {self.default!r}")
        for bucket, regime in self.overrides:
            if regime not in REGIMES:
                raise CaseValidationError(
                    f"csa.regime.overrides[{bucket!r}]: unknown regime {regime!r}"
                )
            if bucket not in known_buckets:
                raise CaseValidationError(
                    f"csa.regime.overrides[{bucket!r}]: unknown bucket"
                )


@dataclass(frozen=True)
class HaircutMatrix:
    """Haircut ppm keyed by (icad, bucket, regime)."""

    entries: tuple[tuple[tuple[str, str, str], int], ...]

    def lookup(self, icad: str, bucket: str, regime: str) -> Optional[int]:
        key = (icad, bucket, regime)
        for k, ppm in self.entries:
            if k == key:
                return ppm
        return None

    def validate(self) -> None:
        for (icad, bucket, regime), ppm in self.entries:
            if regime not in REGIMES:
                raise CaseValidationError(
                    f"haircuts.matrix[{icad}|{bucket}|{regime}]: unknown regime"
                )
            if not (0 <= ppm < PPM):
                raise CaseValidationError(
                    f"haircuts.matrix[{icad}|{bucket}|{regime}]: haircut must be in [0, 1)"
                )


@dataclass(frozen=True)
class CapSpec:
    """One concentration cap; absolute cents or fraction-of-U ppm."""

    mode: str
    value: int  # cents when absolute, ppm when fraction_of_U

    def validate(self, path: str) -> None:
        if self.mode not in CAP_MODES:
            raise CaseValidationError(f"{path}.mode: unknown mode {self.mode!r}")
        if self.mode == "absolute" and self.value <= 0:
            raise CaseValidationError(f"{path}.value: absolute cap must be > 0")
        if self.mode == "fraction_of_U" and not (0 < self.value <= PPM):
            raise CaseValidationError(f"{path}.value: fraction must be in (0, 1]")


@dataclass(frozen=True)
class Caps:
    """Concentration limits: cash plus issuer/class/currency/global."""

    cash: Optional[CapSpec] = None
    issuer: tuple[tuple[str, CapSpec], ...] = ()
    asset_class: tuple[tuple[str, CapSpec], ...] = ()
    currency: tuple[tuple[str, CapSpec], ...] = ()
    global_cap: Optional[CapSpec] = None

    def validate(self) -> None:
        if self.cash is not None:
            self.cash.validate("caps.cash_cap")
        for group, items in (
            ("issuer_cap", self.issuer),
            ("class_cap", self.asset_class),
            ("currency_cap", self.currency),
        ):
            for key, spec in items:
                spec.validate(f"caps.{group}[{key!r}]")
        if self.global_cap is not None:
            self.global_cap.validate("caps.global_cap")


@dataclass(frozen=True)
class Window:
    """Coverage window above the effective requirement.

    ``buffer_input`` keeps the raw file form ("25bps" or a dollar amount);
    ``buffer_cents`` is the value resolved against R_eff at load time and
    frozen for the run.
    """

    buffer_cents: int
    hard_cap_enabled: bool
    buffer_input: str

    def validate(self) -> None:
        if self.buffer_cents < 0:
            raise CaseValidationError("window.buffer: must be >= 0")


@dataclass(frozen=True)
class InventoryItem:
    """One postable line: identity, valuation inputs, lot bounds, carry."""

    id: str
    asset_class: str
    issuer: str
    bucket: str
    currency: str
    price_ppm: int
    unit_cents: int
    current_lots: int
    max_lots: int
    carry_cost_cents: int  # per lot per day
    is_cash: bool
    eligible_flag: bool = True
    icad: str = ""

    def validate(self, path: str) -> None:
        if self.unit_cents <= 0:
            raise CaseValidationError(f"{path}.unit: must be > 0")
        if self.price_ppm <= 0:
            raise CaseValidationError(f"{path}.price: must be > 0")
        if self.max_lots < 1:
            raise CaseValidationError(f"{path}.max_lots: must be >= 1")
        if not (0 <= self.current_lots <= self.max_lots):
            raise CaseValidationError(
                f"{path}.current_lots: must satisfy 0 <= current_lots <= max_lots"
            )
        if self.carry_cost_cents < 0:
            raise CaseValidationError(f"{path}.carry: must be >= 0")


@dataclass(frozen=True)
class ScenarioSet:
    """Scenario loss matrix (per lot, dollars) with normalized weights."""

    loss: tuple[tuple[float, ...], ...]  # scenarios x items
    weights: tuple[float, ...]
    alpha: float = 0.90

    @property
    def n_scenarios(self) -> int:
        return len(self.weights)

    def validate(self, n_items: int) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise CaseValidationError("scenarios.alpha: must be in (0, 1)")
        if len(self.loss) != len(self.weights):
            raise CaseValidationError(
                "scenarios.loss_matrix: row count must match weights length"
            )
        for s, row in enumerate(self.loss):
            if len(row) != n_items:
                raise CaseValidationError(
                    f"scenarios.loss_matrix[{s}]: expected {n_items} columns"
                )
        if self.weights and abs(sum(self.weights) - 1.0) > 1e-9:
            raise CaseValidationError("scenarios.weights: must be normalized")


@dataclass(frozen=True)
class WeightsProvenance:
    """Calibration inputs for the objective weights, plus a content hash."""

    ops_move_cost_cents: int
    horizon_days: int
    cvar_price_per_mm_day_cents: int
    funding_bps_annual: float
    day_count: int = 360
    content_hash: str = ""
    timestamp: str = ""

    def calibration_inputs(self) -> dict[str, Any]:
        return {
            "ops_move_cost": cents_to_dollars(self.ops_move_cost_cents),
            "horizon_days": self.horizon_days,
            "cvar_price_per_mm_day": cents_to_dollars(self.cvar_price_per_mm_day_cents),
            "funding_bps_annual": self.funding_bps_annual,
            "day_count": self.day_count,
        }

    def compute_hash(self) -> str:
        blob = json.dumps(self.calibration_inputs(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Weights:
    """Scalarization weights: lambda $/lot, mu dimensionless, gamma 1/day."""

    lam: float
    mu: float
    gamma: float
    provenance: Optional[WeightsProvenance] = None

    def validate(self) -> None:
        for name, v in (("lambda", self.lam), ("mu", self.mu), ("gamma", self.gamma)):
            if v < 0 or not math.isfinite(v):
                raise CaseValidationError(f"weights.{name}: must be finite and >= 0")


@dataclass(frozen=True)
class SolverLimits:
    """Search and certification budgets."""

    sa_iterations: int = 800
    plateau_window: int = 200
    plateau_eps: float = 0.003
    n_max: int = 16
    k_max: int = 3
    depth_p: int = 2
    wall_seconds: float = 60.0
    seed: int = 0
    shots: int = 512
    angle_budget: int = 200
    trust_radius: int = 3

    def validate(self) -> None:
        if not (1 <= self.n_max <= 16):
            raise CaseValidationError("solver.limits.n_max: must be in [1, 16]")
        if not (2 <= self.k_max <= 4):
            raise CaseValidationError("solver.limits.k_max: must be in [2, 4]")
        if self.depth_p < 1:
            raise CaseValidationError("solver.limits.depth_p: must be >= 1")
        if self.sa_iterations < 0:
            raise CaseValidationError("solver.limits.sa_iterations: must be >= 0")
        if self.plateau_window < 1:
            raise CaseValidationError("solver.limits.plateau_window: must be >= 1")
        if self.trust_radius < 0:
            raise CaseValidationError("solver.limits.trust_radius: must be >= 0")


@dataclass(frozen=True, eq=True)
class CaseInput:
    """The full normalized case, immutable after validation.

    ``r_eff_cents``, ``eligible`` and ``v_cents`` are derived at load time
    (and recomputed identically on re-parse).  ``warnings`` is diagnostic
    only and excluded from equality.
    """

    terms: CsaTerms
    regime: RegimeSelector
    haircuts: HaircutMatrix
    schedule_a: frozenset[tuple[str, str]]
    caps: Caps
    window: Window
    exposure_cents: int
    exposure_timestamp: str
    inventory: tuple[InventoryItem, ...]
    scenarios: ScenarioSet
    weights: Weights
    limits: SolverLimits
    audit_flags: frozenset[str]
    span_citations: tuple[Any, ...] = ()
    # derived at load time
    r_eff_cents: int = 0
    eligible: tuple[bool, ...] = ()
    v_cents: tuple[Optional[int], ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_items(self) -> int:
        return len(self.inventory)

    def item_index(self, item_id: str) -> int:
        for i, it in enumerate(self.inventory):
            if it.id == item_id:
                return i
        raise KeyError(item_id)

    def max_coverage_cents(self) -> int:
        return sum(
            (self.v_cents[i] or 0) * self.inventory[i].max_lots
            for i in range(self.n_items)
            if self.eligible[i]
        )


# ---------------------------------------------------------------------------
# valuation
# ---------------------------------------------------------------------------


def _resolve_haircut_ppm(
    item: InventoryItem, haircuts: HaircutMatrix, regime: str
) -> int:
    ppm = haircuts.lookup(item.icad or item.asset_class, item.bucket, regime)
    if ppm is None:
        if item.is_cash:
            return 0
        raise MissingHaircutError(item.icad or item.asset_class, item.bucket, regime)
    return ppm


def lot_valuation(
    item: InventoryItem, haircuts: HaircutMatrix, regime: RegimeSelector
) -> int:
    """After-haircut value of one lot, in cents.

    v = unit * price * (1 - haircut), rounded half-even to the cent; the
    haircut row is (icad, bucket, resolved regime), with cash defaulting
    to a zero haircut when no row exists.
    """
    reg = regime.resolve(item.bucket)
    hc_ppm = _resolve_haircut_ppm(item, haircuts, reg)
    num = item.unit_cents * item.price_ppm * (PPM - hc_ppm)
    return _round_half_even(num, PPM * PPM)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _parse_cap_spec(obj: Any, path: str) -> CapSpec:
    mode = _to_str(_get(obj, "mode", path), f"{path}.mode")
    raw = _get(obj, "value", path)
    if mode == "absolute":
        value = _to_cents(raw, f"{path}.value")
    elif mode == "fraction_of_U":
        value = _to_ppm(raw, f"{path}.value")
    else:
        raise CaseValidationError(f"{path}.mode: unknown mode {mode!r}")
    spec = CapSpec(mode=mode, value=value)
    spec.validate(path)
    return spec


def _parse_cap_group(obj: Mapping[str, Any], key: str) -> tuple[tuple[str, CapSpec], ...]:
    group = _get(obj, key, "caps", default={})
    if not isinstance(group, Mapping):
        raise CaseParseError(f"caps.{key}: expected an object")
    return tuple(
        (name, _parse_cap_spec(group[name], f"caps.{key}[{name!r}]"))
        for name in sorted(group)
    )


def _parse_buffer(raw: Any, r_eff_cents: int) -> tuple[int, str]:
    """Resolve the window buffer against R_eff; returns (cents, raw form)."""
    if isinstance(raw, str):
        text = raw.strip()
        if not text.endswith("bps"):
            raise CaseParseError("window.buffer: string form must end in 'bps'")
        try:
            bps = Decimal(text[:-3])
        except ArithmeticError:
            raise CaseParseError("window.buffer: malformed bps value") from None
        if bps < 0:
            raise CaseValidationError("window.buffer: must be >= 0")
        num = int(bps * PPM) * r_eff_cents  # bps scaled to ppm-of-1e4 for exactness
        cents = _round_half_even(num, 10_000 * PPM)
        return cents, text
    cents = _to_cents(raw, "window.buffer")
    return cents, ""


def parse_case(document: bytes | str) -> CaseInput:
    """Parse and validate a case file into a :class:`CaseInput`.

    Applies defaults (alpha=0.90, day_count=360, plateau_eps=0.003),
    resolves units (bps buffers against R_eff, money to cents, fractions
    to ppm), renormalizes scenario weights with a recorded warning, and
    derives per-item eligibility and valuations.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        root = json.loads(document, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"$: invalid JSON ({exc})") from None
    if not isinstance(root, Mapping):
        raise CaseParseError("$: top level must be an object")

    warnings: list[str] = []

    csa = _get(root, "csa", "$")
    meta = _get(csa, "meta", "csa", default={})
    terms_obj = _get(csa, "terms", "csa")
    terms = CsaTerms(
        threshold_cents=_to_cents(_get(terms_obj, "threshold", "csa.terms", 0), "csa.terms.threshold"),
        ia_cents=_to_cents(_get(terms_obj, "ia", "csa.terms", 0), "csa.terms.ia"),
        im_cents=_to_cents(_get(terms_obj, "im", "csa.terms", 0), "csa.terms.im"),
        mta_cents=_to_cents(_get(terms_obj, "mta", "csa.terms", 0), "csa.terms.mta"),
        ra_cents=_to_cents(_get(terms_obj, "ra", "csa.terms"), "csa.terms.ra"),
        base_currency=_to_str(_get(terms_obj, "base_currency", "csa.terms", "USD"), "csa.terms.base_currency"),
        governing_law=_to_str(_get(meta, "governing_law", "csa.meta", "NY"), "csa.meta.governing_law"),
        bilateral=_to_bool(_get(meta, "bilateral", "csa.meta", True), "csa.meta.bilateral"),
    )
    terms.validate()

    regime_obj = _get(csa, "regime", "csa", default={})
    overrides_obj = _get(regime_obj, "overrides", "csa.regime", default={})
    if not isinstance(overrides_obj, Mapping):
        raise CaseParseError("csa.regime.overrides: expected an object")
    regime = RegimeSelector(
        default=_to_str(_get(regime_obj, "default", "csa.regime", "m1"), "csa.regime.default"),
        overrides=tuple(sorted(
            (b, _to_str(r, f"csa.regime.overrides[{b!r}]")) for b, r in overrides_obj.items()
        )),
    )

    matrix_obj = _get(_get(root, "haircuts", "$"), "matrix", "haircuts")
    if not isinstance(matrix_obj, Mapping):
        raise CaseParseError("haircuts.matrix: expected an object")
    entries = []
    for key in sorted(matrix_obj):
        parts = key.split("|")
        if len(parts) != 3:
            raise CaseParseError(f"haircuts.matrix[{key!r}]: key must be 'ICAD|bucket|regime'")
        ppm = _to_ppm(matrix_obj[key], f"haircuts.matrix[{key!r}]")
        entries.append(((parts[0], parts[1], parts[2]), ppm))
    haircuts = HaircutMatrix(entries=tuple(entries))
    haircuts.validate()

    elig_obj = _get(root, "eligibility", "$", default={})
    schedule_raw = _get(elig_obj, "scheduleA", "eligibility", default=[])
    if not isinstance(schedule_raw, list):
        raise CaseParseError("eligibility.scheduleA: expected a list")
    schedule = set()
    for i, pair in enumerate(schedule_raw):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise CaseParseError(f"eligibility.scheduleA[{i}]: expected [class, bucket]")
        schedule.add((_to_str(pair[0], f"eligibility.scheduleA[{i}][0]"),
                      _to_str(pair[1], f"eligibility.scheduleA[{i}][1]")))

    caps_obj = _get(root, "caps", "$", default={})
    cash_raw = _get(caps_obj, "cash_cap", "caps", default=None)
    global_raw = _get(caps_obj, "global_cap", "caps", default=None)
    caps = Caps(
        cash=None if cash_raw is None else _parse_cap_spec(cash_raw, "caps.cash_cap"),
        issuer=_parse_cap_group(caps_obj, "issuer_cap"),
        asset_class=_parse_cap_group(caps_obj, "class_cap"),
        currency=_parse_cap_group(caps_obj, "currency_cap"),
        global_cap=None if global_raw is None else _parse_cap_spec(global_raw, "caps.global_cap"),
    )
    caps.validate()

    exposure_obj = _get(root, "exposure", "$")
    exposure_cents = _to_cents(_get(exposure_obj, "amount", "exposure"), "exposure.amount")
    exposure_ts = _to_str(_get(exposure_obj, "timestamp", "exposure", ""), "exposure.timestamp")
    if exposure_cents < 0:
        raise CaseValidationError("exposure.amount: must be >= 0")

    from .requirement import effective_requirement  # deferred: avoids import cycle

    r_eff_cents = effective_requirement(exposure_cents, terms)

    window_obj = _get(root, "window", "$", default={})
    buffer_cents, buffer_input = _parse_buffer(_get(window_obj, "buffer", "window", 0), r_eff_cents)
    window = Window(
        buffer_cents=buffer_cents,
        hard_cap_enabled=_to_bool(_get(window_obj, "hard_cap_enabled", "window", False), "window.hard_cap_enabled"),
        buffer_input=buffer_input,
    )
    window.validate()

    inv_raw = _get(root, "inventory", "$")
    if not isinstance(inv_raw, list):
        raise CaseParseError("inventory: expected a list")
    if not inv_raw:
        raise CaseValidationError("inventory must be non-empty")

    costs_obj = _get(root, "costs", "$", default={})
    carry_map = _get(costs_obj, "carry_per_lot_day", "costs", default={})
    if not isinstance(carry_map, Mapping):
        raise CaseParseError("costs.carry_per_lot_day: expected an object")

    items = []
    seen_ids = set()
    for i, obj in enumerate(inv_raw):
        path = f"inventory[{i}]"
        item_id = _to_str(_get(obj, "id", path), f"{path}.id")
        if item_id in seen_ids:
            raise CaseValidationError(f"{path}.id: duplicate id {item_id!r}")
        seen_ids.add(item_id)
        if item_id not in carry_map:
            raise CaseParseError(f"costs.carry_per_lot_day[{item_id!r}]: missing required field")
        item = InventoryItem(
            id=item_id,
            asset_class=_to_str(_get(obj, "class", path), f"{path}.class"),
            issuer=_to_str(_get(obj, "issuer", path), f"{path}.issuer"),
            bucket=_to_str(_get(obj, "bucket", path), f"{path}.bucket"),
            currency=_to_str(_get(obj, "currency", path), f"{path}.currency"),
            price_ppm=_to_ppm(_get(obj, "price", path), f"{path}.price"),
            unit_cents=_to_cents(_get(obj, "unit", path), f"{path}.unit"),
            current_lots=_to_int(_get(obj, "current_lots", path), f"{path}.current_lots"),
            max_lots=_to_int(_get(obj, "max_lots", path), f"{path}.max_lots"),
            carry_cost_cents=_to_cents(carry_map[item_id], f"costs.carry_per_lot_day[{item_id!r}]"),
            is_cash=_to_bool(_get(obj, "is_cash", path, False), f"{path}.is_cash"),
            eligible_flag=_to_bool(_get(obj, "eligible", path, True), f"{path}.eligible"),
            icad=_to_str(_get(obj, "icad", path, ""), f"{path}.icad"),
        )
        item.validate(path)
        items.append(item)
    inventory = tuple(items)

    known_buckets = frozenset(it.bucket for it in inventory) | frozenset(b for _, b in schedule)
    regime.validate(known_buckets)

    scen_obj = _get(root, "scenarios", "$", default=None)
    if scen_obj is None:
        scenarios = ScenarioSet(loss=(), weights=(), alpha=0.90)
    else:
        loss_raw = _get(scen_obj, "loss_matrix", "scenarios", default=[])
        weights_raw = _get(scen_obj, "weights", "scenarios", default=[])
        if not isinstance(loss_raw, list) or not isinstance(weights_raw, list):
            raise CaseParseError("scenarios: loss_matrix and weights must be lists")
        w = [_to_float(x, f"scenarios.weights[{s}]") for s, x in enumerate(weights_raw)]
        for s, x in enumerate(w):
            if x < 0:
                raise CaseValidationError(f"scenarios.weights[{s}]: must be >= 0")
        total = sum(w)
        if w and abs(total - 1.0) > 1e-9:
            if total <= 0:
                raise CaseValidationError("scenarios.weights: sum must be > 0")
            w = [x / total for x in w]
            warnings.append(f"scenario_weights_renormalized: raw sum was {total!r}")
        loss = tuple(
            tuple(_to_float(x, f"scenarios.loss_matrix[{s}][{j}]") for j, x in enumerate(row))
            for s, row in enumerate(loss_raw)
        )
        scenarios = ScenarioSet(
            loss=loss,
            weights=tuple(w),
            alpha=_to_float(_get(scen_obj, "alpha", "scenarios", Decimal("0.90")), "scenarios.alpha"),
        )
    scenarios.validate(len(inventory))

    prov_obj = _get(root, "weights_provenance", "$", default=None)
    provenance = None
    if prov_obj is not None:
        provenance = WeightsProvenance(
            ops_move_cost_cents=_to_cents(_get(prov_obj, "ops_move_cost", "weights_provenance"), "weights_provenance.ops_move_cost"),
            horizon_days=_to_int(_get(prov_obj, "horizon_days", "weights_provenance"), "weights_provenance.horizon_days"),
            cvar_price_per_mm_day_cents=_to_cents(_get(prov_obj, "cvar_price_per_mm_day", "weights_provenance"), "weights_provenance.cvar_price_per_mm_day"),
            funding_bps_annual=_to_float(_get(prov_obj, "funding_bps_annual", "weights_provenance"), "weights_provenance.funding_bps_annual"),
            day_count=_to_int(_get(prov_obj, "day_count", "weights_provenance", 360), "weights_provenance.day_count"),
            timestamp=_to_str(_get(prov_obj, "timestamp", "weights_provenance", ""), "weights_provenance.timestamp"),
        )
        recomputed = provenance.compute_hash()
        supplied = _get(prov_obj, "content_hash", "weights_provenance", "")
        if supplied and supplied != recomputed:
            warnings.append("weights_provenance_hash_mismatch: recomputed over inputs")
        provenance = WeightsProvenance(
            ops_move_cost_cents=provenance.ops_move_cost_cents,
            horizon_days=provenance.horizon_days,
            cvar_price_per_mm_day_cents=provenance.cvar_price_per_mm_day_cents,
            funding_bps_annual=provenance.funding_bps_annual,
            day_count=provenance.day_count,
            content_hash=recomputed,
            timestamp=provenance.timestamp,
        )

    weights_obj = _get(root, "weights", "$", default=None)
    if weights_obj is not None:
        weights = Weights(
            lam=_to_float(_get(weights_obj, "lambda", "weights"), "weights.lambda"),
            mu=_to_float(_get(weights_obj, "mu", "weights"), "weights.mu"),
            gamma=_to_float(_get(weights_obj, "gamma", "weights"), "weights.gamma"),
            provenance=provenance,
        )
    elif provenance is not None:
        from .objective import calibrate_weights  # deferred: avoids import cycle

        weights = calibrate_weights(provenance)
    else:
        weights = Weights(lam=0.0, mu=0.0, gamma=0.0, provenance=None)
    weights.validate()

    audit_obj = _get(root, "audit", "$", default={})
    flags_raw = _get(audit_obj, "flags", "audit", default=[])
    if not isinstance(flags_raw, list):
        raise CaseParseError("audit.flags: expected a list")
    spans_raw = _get(audit_obj, "span_citations", "audit", default=[])
    if not isinstance(spans_raw, list):
        raise CaseParseError("audit.span_citations: expected a list")

    limits_obj = _get(_get(root, "solver", "$", default={}), "limits", "solver", default={})
    defaults = SolverLimits()
    limits = SolverLimits(
        sa_iterations=_to_int(_get(limits_obj, "sa_iterations", "solver.limits", defaults.sa_iterations), "solver.limits.sa_iterations"),
        plateau_window=_to_int(_get(limits_obj, "plateau_window", "solver.limits", defaults.plateau_window), "solver.limits.plateau_window"),
        plateau_eps=_to_float(_get(limits_obj, "plateau_eps", "solver.limits", Decimal("0.003")), "solver.limits.plateau_eps"),
        n_max=_to_int(_get(limits_obj, "n_max", "solver.limits", defaults.n_max), "solver.limits.n_max"),
        k_max=_to_int(_get(limits_obj, "k_max", "solver.limits", defaults.k_max), "solver.limits.k_max"),
        depth_p=_to_int(_get(limits_obj, "depth_p", "solver.limits", defaults.depth_p), "solver.limits.depth_p"),
        wall_seconds=_to_float(_get(limits_obj, "wall_seconds", "solver.limits", Decimal(str(defaults.wall_seconds))), "solver.limits.wall_seconds"),
        seed=_to_int(_get(limits_obj, "seed", "solver.limits", defaults.seed), "solver.limits.seed"),
        shots=_to_int(_get(limits_obj, "shots", "solver.limits", defaults.shots), "solver.limits.shots"),
        angle_budget=_to_int(_get(limits_obj, "angle_budget", "solver.limits", defaults.angle_budget), "solver.limits.angle_budget"),
        trust_radius=_to_int(_get(limits_obj, "trust_radius", "solver.limits", defaults.trust_radius), "solver.limits.trust_radius"),
    )
    limits.validate()

    # derive eligibility and valuations; a scheduled item missing its
    # haircut row is a validation error (audit completeness)
    eligible = []
    v_cents: list[Optional[int]] = []
    for i, item in enumerate(inventory):
        ok = item.eligible_flag and (item.asset_class, item.bucket) in schedule
        if ok:
            v = lot_valuation(item, haircuts, regime)
            eligible.append(True)
            v_cents.append(v)
        else:
            eligible.append(False)
            v_cents.append(None)
            if item.current_lots > 0:
                warnings.append(f"ineligible_item_with_holdings: {item.id}")

    case = CaseInput(
        terms=terms,
        regime=regime,
        haircuts=haircuts,
        schedule_a=frozenset(schedule),
        caps=caps,
        window=window,
        exposure_cents=exposure_cents,
        exposure_timestamp=exposure_ts,
        inventory=inventory,
        scenarios=scenarios,
        weights=weights,
        limits=limits,
        audit_flags=frozenset(_to_str(f, f"audit.flags[{i}]") for i, f in enumerate(flags_raw)),
        span_citations=tuple(spans_raw),
        r_eff_cents=r_eff_cents,
        eligible=tuple(eligible),
        v_cents=tuple(v_cents),
        warnings=tuple(warnings),
    )
    if not any(case.eligible):
        raise CaseValidationError("inventory: no eligible items")
    return case


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------


def _cap_spec_dict(spec: CapSpec) -> dict[str, Any]:
    value = cents_to_dollars(spec.value) if spec.mode == "absolute" else ppm_to_fraction(spec.value)
    return {"mode": spec.mode, "value": value}


def case_to_dict(case: CaseInput) -> dict[str, Any]:
    """External-schema dict for a case (canonical, key-sorted on dump)."""
    caps: dict[str, Any] = {}
    if case.caps.cash is not None:
        caps["cash_cap"] = _cap_spec_dict(case.caps.cash)
    for key, group in (
        ("issuer_cap", case.caps.issuer),
        ("class_cap", case.caps.asset_class),
        ("currency_cap", case.caps.currency),
    ):
        if group:
            caps[key] = {name: _cap_spec_dict(spec) for name, spec in group}
    if case.caps.global_cap is not None:
        caps["global_cap"] = _cap_spec_dict(case.caps.global_cap)

    window: dict[str, Any] = {"hard_cap_enabled": case.window.hard_cap_enabled}
    if case.window.buffer_input:
        window["buffer"] = case.window.buffer_input
    else:
        window["buffer"] = cents_to_dollars(case.window.buffer_cents)

    doc: dict[str, Any] = {
        "csa": {
            "meta": {
                "governing_law": case.terms.governing_law,
                "bilateral": case.terms.bilateral,
            },
            "terms": {
                "threshold": cents_to_dollars(case.terms.threshold_cents),
                "ia": cents_to_dollars(case.terms.ia_cents),
                "im": cents_to_dollars(case.terms.im_cents),
                "mta": cents_to_dollars(case.terms.mta_cents),
                "ra": cents_to_dollars(case.terms.ra_cents),
                "base_currency": case.terms.base_currency,
            },
            "regime": {
                "default": case.regime.default,
                "overrides": dict(case.regime.overrides),
            },
        },
        "haircuts": {
            "matrix": {
                f"{icad}|{bucket}|{regime}": ppm_to_fraction(ppm)
                for (icad, bucket, regime), ppm in case.haircuts.entries
            }
        },
        "eligibility": {"scheduleA": sorted([c, b] for c, b in case.schedule_a)},
        "caps": caps,
        "window": window,
        "exposure": {
            "amount": cents_to_dollars(case.exposure_cents),
            "timestamp": case.exposure_timestamp,
        },
        "scenarios": {
            "loss_matrix": [list(row) for row in case.scenarios.loss],
            "weights": list(case.scenarios.weights),
            "alpha": case.scenarios.alpha,
        },
        "inventory": [
            {
                "id": it.id,
                "class": it.asset_class,
                "issuer": it.issuer,
                "bucket": it.bucket,
                "currency": it.currency,
                "price": ppm_to_fraction(it.price_ppm),
                "unit": cents_to_dollars(it.unit_cents),
                "current_lots": it.current_lots,
                "max_lots": it.max_lots,
                "is_cash": it.is_cash,
                "eligible": it.eligible_flag,
                "icad": it.icad,
            }
            for it in case.inventory
        ],
        "costs": {
            "carry_per_lot_day": {
                it.id: cents_to_dollars(it.carry_cost_cents) for it in case.inventory
            }
        },
        "weights": {
            "lambda": case.weights.lam,
            "mu": case.weights.mu,
            "gamma": case.weights.gamma,
        },
        "audit": {
            "flags": sorted(case.audit_flags),
            "span_citations": list(case.span_citations),
        },
        "solver": {
            "limits": {
                "sa_iterations": case.limits.sa_iterations,
                "plateau_window": case.limits.plateau_window,
                "plateau_eps": case.limits.plateau_eps,
                "n_max": case.limits.n_max,
                "k_max": case.limits.k_max,
                "depth_p": case.limits.depth_p,
                "wall_seconds": case.limits.wall_seconds,
                "seed": case.limits.seed,
                "shots": case.limits.shots,
                "angle_budget": case.limits.angle_budget,
                "trust_radius": case.limits.trust_radius,
            }
        },
    }
    prov = case.weights.provenance
    if prov is not None:
        doc["weights_provenance"] = {
            "ops_move_cost": cents_to_dollars(prov.ops_move_cost_cents),
            "horizon_days": prov.horizon_days,
            "cvar_price_per_mm_day": cents_to_dollars(prov.cvar_price_per_mm_day_cents),
            "funding_bps_annual": prov.funding_bps_annual,
            "day_count": prov.day_count,
            "content_hash": prov.content_hash,
            "timestamp": prov.timestamp,
        }
    return doc


def canonical_json(obj: Any) -> bytes:
    """Canonical JSON bytes: sorted keys, compact separators, no NaN."""
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode()


def case_hash(case: CaseInput) -> str:
    return hashlib.sha256(canonical_json(case_to_dict(case))).hexdigest()
