"""Seeded synthetic used-car market with an exactly computable generative oracle.

The price process is log-linear with documented coefficients, so the true
conditional mean and noise scale of every generated row can be recovered
from the emitted spec file:

    log mu*(x) = base + age*c_age + (odometer/100k)*c_odo + (power/100)*c_pow
                 + brand/model/variant/fuel/transmission/condition effects
                 + seasonal_sin*sin(2*pi*month/12) + seasonal_cos*cos(...)
                 + trend_per_day*days_since_ref
                 + elasticity(segment(model), offer_duration)

    sale_price = mu*(x) + sigma*(x) * z,   z ~ N(0,1)
    sigma*(x)  = sigma0 * (1 + age_noise_slope * age_years)

Offer-duration elasticity comes in three designed shapes (flat, rise to a
knee then flat, steady decline), assigned to vehicle models round-robin.
Sale dates are drawn with density increasing over the range (volume growth),
which keeps the most recent window well populated for time-wise splits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import ConfigurationError, GenerationError, OracleError
from .pipeline import ColumnSpec, FeatureSchema

CSV_COLUMNS = [
    "brand",
    "model",
    "variant",
    "fuel_type",
    "transmission",
    "condition",
    "age_years",
    "odometer_km",
    "engine_power_kw",
    "offer_duration_days",
    "sale_date",
    "sale_price",
]

ELASTICITY_SHAPES = ("flat", "rise_then_flat", "decline")


@dataclass
class Elasticity:
    """Offer-duration effect on log price for one vehicle segment."""

    shape: str
    magnitude: float = 0.0
    knee_days: float = 45.0

    def log_effect(self, offer_days):
        o = np.asarray(offer_days, dtype=np.float64)
        if self.shape == "flat":
            return np.zeros_like(o)
        if self.shape == "rise_then_flat":
            return self.magnitude * np.minimum(o, self.knee_days) / self.knee_days
        if self.shape == "decline":
            return self.magnitude * o / 150.0
        raise ConfigurationError(f"unknown elasticity shape {self.shape!r}")


@dataclass
class MarketSpec:
    """Full description of the generative process; everything the oracle needs."""

    n_rows: int = 20_000
    date_start: date = date(2018, 7, 1)
    date_end: date = date(2022, 8, 20)

    brands: list[str] = field(default_factory=list)
    models: list[str] = field(default_factory=list)  # model -> brand via brand_of_model
    variants: list[str] = field(default_factory=list)
    brand_of_model: dict[str, str] = field(default_factory=dict)
    model_of_variant: dict[str, str] = field(default_factory=dict)

    base_log_price: float = math.log(21_000.0)
    age_coef: float = -0.062
    odometer_coef: float = -0.16  # per 100,000 km
    power_coef: float = 0.18  # per 100 kW

    brand_effects: dict[str, float] = field(default_factory=dict)
    model_effects: dict[str, float] = field(default_factory=dict)
    variant_effects: dict[str, float] = field(default_factory=dict)
    fuel_effects: dict[str, float] = field(default_factory=dict)
    transmission_effects: dict[str, float] = field(default_factory=dict)
    condition_effects: dict[str, float] = field(default_factory=dict)

    seasonal_sin: float = 0.018
    seasonal_cos: float = 0.008
    trend_per_day: float = 4.0e-5

    segment_elasticities: list[Elasticity] = field(default_factory=list)

    sigma0: float = 300.0
    age_noise_slope: float = 0.12  # alpha in sigma*(x) = sigma0 * (1 + alpha*age)

    recency_power: float = 2.0  # sale-date density grows like (t/T)^recency_power

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ConfigurationError("sigma0 must be positive")
        if self.age_noise_slope < 0:
            raise ConfigurationError("age_noise_slope must be non-negative")

    # -- construction ---------------------------------------------------------

    @classmethod
    def default(cls, n_rows: int = 20_000) -> "MarketSpec":
        """Desk-scale market: 6 brands x 5 models x 2 variants, fixed coefficients."""
        rng = np.random.default_rng(987_654_321)
        spec = cls(n_rows=n_rows)
        spec.brands = [f"brand_{i}" for i in range(6)]
        for b in spec.brands:
            for j in range(5):
                m = f"{b}_model_{j}"
                spec.models.append(m)
                spec.brand_of_model[m] = b
                for k in range(2):
                    v = f"{m}_v{k}"
                    spec.variants.append(v)
                    spec.model_of_variant[v] = m
        spec.brand_effects = {b: round(x, 6) for b, x in zip(spec.brands, rng.normal(0.0, 0.10, 6))}
        spec.model_effects = {m: round(x, 6) for m, x in zip(spec.models, rng.normal(0.0, 0.09, len(spec.models)))}
        spec.variant_effects = {
            v: round(x, 6) for v, x in zip(spec.variants, rng.normal(0.0, 0.04, len(spec.variants)))
        }
        spec.fuel_effects = {"petrol": 0.0, "diesel": 0.02, "hybrid": 0.05, "electric": 0.12}
        spec.transmission_effects = {"manual": 0.0, "automatic": 0.03}
        spec.condition_effects = {"excellent": 0.04, "good": 0.0, "fair": -0.07}
        spec.segment_elasticities = [
            Elasticity("flat", 0.0),
            Elasticity("rise_then_flat", 0.05, 45.0),
            Elasticity("decline", -0.08),
        ]
        return spec

    def segment_of_model(self, model: str) -> int:
        try:
            return self.models.index(model) % len(self.segment_elasticities)
        except ValueError:
            raise OracleError(f"unknown model {model!r}") from None

    # -- serialization ----------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "date_start": self.date_start.isoformat(),
            "date_end": self.date_end.isoformat(),
            "brands": self.brands,
            "models": self.models,
            "variants": self.variants,
            "brand_of_model": self.brand_of_model,
            "model_of_variant": self.model_of_variant,
            "base_log_price": self.base_log_price,
            "age_coef": self.age_coef,
            "odometer_coef": self.odometer_coef,
            "power_coef": self.power_coef,
            "brand_effects": self.brand_effects,
            "model_effects": self.model_effects,
            "variant_effects": self.variant_effects,
            "fuel_effects": self.fuel_effects,
            "transmission_effects": self.transmission_effects,
            "condition_effects": self.condition_effects,
            "seasonal_sin": self.seasonal_sin,
            "seasonal_cos": self.seasonal_cos,
            "trend_per_day": self.trend_per_day,
            "segment_elasticities": [
                {"shape": e.shape, "magnitude": e.magnitude, "knee_days": e.knee_days}
                for e in self.segment_elasticities
            ],
            "sigma0": self.sigma0,
            "age_noise_slope": self.age_noise_slope,
            "recency_power": self.recency_power,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MarketSpec":
        spec = cls(
            n_rows=int(doc["n_rows"]),
            date_start=date.fromisoformat(doc["date_start"]),
            date_end=date.fromisoformat(doc["date_end"]),
        )
        spec.brands = list(doc["brands"])
        spec.models = list(doc["models"])
        spec.variants = list(doc["variants"])
        spec.brand_of_model = dict(doc["brand_of_model"])
        spec.model_of_variant = dict(doc["model_of_variant"])
        for key in (
            "base_log_price", "age_coef", "odometer_coef", "power_coef",
            "seasonal_sin", "seasonal_cos", "trend_per_day", "sigma0",
            "age_noise_slope", "recency_power",
        ):
            setattr(spec, key, float(doc[key]))
        for key in (
            "brand_effects", "model_effects", "variant_effects",
            "fuel_effects", "transmission_effects", "condition_effects",
        ):
            setattr(spec, key, {k: float(v) for k, v in doc[key].items()})
        spec.segment_elasticities = [
            Elasticity(e["shape"], float(e["magnitude"]), float(e["knee_days"]))
            for e in doc["segment_elasticities"]
        ]
        return spec

    @classmethod
    def from_json(cls, text: str) -> "MarketSpec":
        return cls.from_json_dict(json.loads(text))


def market_schema(spec: MarketSpec) -> FeatureSchema:
    """The pipeline schema describing CSVs produced by `generate`."""
    return FeatureSchema(
        columns=[
            ColumnSpec("brand", "categorical"),
            ColumnSpec("model", "categorical"),
            ColumnSpec("variant", "categorical"),
            ColumnSpec("fuel_type", "categorical"),
            ColumnSpec("transmission", "categorical"),
            ColumnSpec("condition", "categorical"),
            ColumnSpec("age_years", "numeric"),
            ColumnSpec("odometer_km", "numeric"),
            ColumnSpec("engine_power_kw", "numeric"),
            ColumnSpec("offer_duration_days", "numeric"),
            ColumnSpec("sale_date", "sale_date"),
            ColumnSpec("sale_price", "target"),
        ],
        reference_date=spec.date_start,
    )


def _effect_vector(table: dict[str, float], values: np.ndarray, kind: str) -> np.ndarray:
    try:
        return np.asarray([table[v] for v in values], dtype=np.float64)
    except KeyError as e:
        raise OracleError(f"unknown {kind} category {e.args[0]!r}") from None


def _moments_from_arrays(
    spec: MarketSpec,
    brand: np.ndarray,
    model: np.ndarray,
    variant: np.ndarray,
    fuel: np.ndarray,
    transmission: np.ndarray,
    condition: np.ndarray,
    age: np.ndarray,
    odometer: np.ndarray,
    power: np.ndarray,
    offer_days: np.ndarray,
    months: np.ndarray,
    days_since_start: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Single source of truth for (mu*, sigma*); shared by generator and oracle."""
    log_mu = np.full(age.shape, spec.base_log_price, dtype=np.float64)
    log_mu += spec.age_coef * age
    log_mu += spec.odometer_coef * (odometer / 100_000.0)
    log_mu += spec.power_coef * (power / 100.0)
    log_mu += _effect_vector(spec.brand_effects, brand, "brand")
    log_mu += _effect_vector(spec.model_effects, model, "model")
    log_mu += _effect_vector(spec.variant_effects, variant, "variant")
    log_mu += _effect_vector(spec.fuel_effects, fuel, "fuel_type")
    log_mu += _effect_vector(spec.transmission_effects, transmission, "transmission")
    log_mu += _effect_vector(spec.condition_effects, condition, "condition")
    log_mu += spec.seasonal_sin * np.sin(2.0 * np.pi * months / 12.0)
    log_mu += spec.seasonal_cos * np.cos(2.0 * np.pi * months / 12.0)
    log_mu += spec.trend_per_day * days_since_start

    segments = np.asarray([spec.segment_of_model(m) for m in model], dtype=np.int64)
    elastic = np.zeros_like(log_mu)
    for s, e in enumerate(spec.segment_elasticities):
        mask = segments == s
        if mask.any():
            elastic[mask] = e.log_effect(offer_days[mask])
    log_mu += elastic

    mu = np.exp(log_mu)
    sigma = spec.sigma0 * (1.0 + spec.age_noise_slope * age)
    return mu, sigma


def _rows_to_arrays(rows: list[dict], spec: MarketSpec) -> dict[str, np.ndarray]:
    def col(name):
        return [r[name] for r in rows]

    dates = [date.fromisoformat(str(d)) for d in col("sale_date")]
    return {
        "brand": np.asarray(col("brand")),
        "model": np.asarray(col("model")),
        "variant": np.asarray(col("variant")),
        "fuel": np.asarray(col("fuel_type")),
        "transmission": np.asarray(col("transmission")),
        "condition": np.asarray(col("condition")),
        "age": np.asarray([float(v) for v in col("age_years")]),
        "odometer": np.asarray([float(v) for v in col("odometer_km")]),
        "power": np.asarray([float(v) for v in col("engine_power_kw")]),
        "offer_days": np.asarray([float(v) for v in col("offer_duration_days")]),
        "months": np.asarray([d.month for d in dates], dtype=np.float64),
        "days_since_start": np.asarray([(d - spec.date_start).days for d in dates], dtype=np.float64),
    }


def oracle_moments(rows: list[dict] | dict, spec: MarketSpec) -> tuple[np.ndarray, np.ndarray]:
    """Exact generative (mu*, sigma*) for rows drawn from this spec.

    Accepts a single row dict or a list; raises OracleError for categories or
    values outside the spec (including missing fields).
    """
    single = isinstance(rows, dict)
    row_list = [rows] if single else list(rows)
    try:
        arrays = _rows_to_arrays(row_list, spec)
    except (KeyError, TypeError, ValueError) as e:
        raise OracleError(f"row not scoreable by the oracle: {e}") from e
    mu, sigma = _moments_from_arrays(
        spec,
        arrays["brand"], arrays["model"], arrays["variant"], arrays["fuel"],
        arrays["transmission"], arrays["condition"], arrays["age"],
        arrays["odometer"], arrays["power"], arrays["offer_days"],
        arrays["months"], arrays["days_since_start"],
    )
    if single:
        return float(mu[0]), float(sigma[0])
    return mu, sigma


def generate(spec: MarketSpec, seed: int) -> list[dict]:
    """Generate the market as a list of CSV-ready row dicts (strings).

    Fully reproducible per seed: the same seed yields byte-identical CSV text.
    """
    if spec.n_rows < 1:
        raise ConfigurationError("n_rows must be >= 1")
    if not spec.brands:
        raise ConfigurationError("spec has no vocabulary; use MarketSpec.default() or fill it in")
    rng = np.random.default_rng(seed)
    n = spec.n_rows

    brand_idx = rng.integers(0, len(spec.brands), size=n)
    brands = np.asarray(spec.brands)[brand_idx]
    models_by_brand = {b: [m for m in spec.models if spec.brand_of_model[m] == b] for b in spec.brands}
    variants_by_model = {m: [v for v in spec.variants if spec.model_of_variant[v] == m] for m in spec.models}
    models = np.asarray([models_by_brand[b][rng.integers(0, len(models_by_brand[b]))] for b in brands])
    variants = np.asarray([variants_by_model[m][rng.integers(0, len(variants_by_model[m]))] for m in models])

    def pick(effects: dict[str, float], weights: list[float]) -> np.ndarray:
        values = list(effects)
        p = weights if len(weights) == len(values) else None
        return rng.choice(values, size=n, p=p)

    fuels = pick(spec.fuel_effects, [0.45, 0.35, 0.14, 0.06])
    transmissions = pick(spec.transmission_effects, [0.55, 0.45])
    conditions = pick(spec.condition_effects, [0.30, 0.50, 0.20])

    age = rng.integers(0, 11, size=n).astype(np.float64)
    odometer = np.clip(age * 13_000.0 + rng.normal(0.0, 9_000.0, size=n), 500.0, None).round()
    power = np.clip(np.exp(rng.normal(math.log(100.0), 0.28, size=n)), 40.0, 350.0).round()
    offer_days = rng.integers(1, 181, size=n).astype(np.float64)

    total_days = (spec.date_end - spec.date_start).days
    # density ~ (t/T)^p  =>  t = T * u^(1/(p+1))
    u = rng.random(n)
    day_offsets = np.floor(total_days * u ** (1.0 / (spec.recency_power + 1.0))).astype(np.int64)
    sale_dates = [spec.date_start + timedelta(days=int(o)) for o in day_offsets]
    months = np.asarray([d.month for d in sale_dates], dtype=np.float64)

    mu, sigma = _moments_from_arrays(
        spec, brands, models, variants, fuels, transmissions, conditions,
        age, odometer, power, offer_days, months, day_offsets.astype(np.float64),
    )
    if not np.all(mu > 0):
        raise GenerationError("spec produced a non-positive generative mean")
    z = rng.standard_normal(n)
    price = mu + sigma * z
    if not np.all(price > 0):
        raise GenerationError(
            "spec produced a non-positive sale price; lower sigma0 or raise base_log_price"
        )

    rows = []
    for i in range(n):
        rows.append(
            {
                "brand": str(brands[i]),
                "model": str(models[i]),
                "variant": str(variants[i]),
                "fuel_type": str(fuels[i]),
                "transmission": str(transmissions[i]),
                "condition": str(conditions[i]),
                "age_years": str(int(age[i])),
                "odometer_km": str(int(odometer[i])),
                "engine_power_kw": str(int(power[i])),
                "offer_duration_days": str(int(offer_days[i])),
                "sale_date": sale_dates[i].isoformat(),
                "sale_price": repr(float(price[i])),
            }
        )
    return rows


def bayes_optimal_nll(rows: list[dict], spec: MarketSpec, eps: float = 1e-6) -> float:
    """Mean generative-truth loss 0.5*(log sigma*^2 + (y-mu*)^2/sigma*^2).

    This is the achievable floor: in expectation no model evaluated with the
    same loss can score below it.
    """
    mu, sigma = oracle_moments(rows, spec)
    try:
        y = np.asarray([float(r["sale_price"]) for r in rows])
    except (KeyError, ValueError) as e:
        raise OracleError(f"dataset rows lack a readable sale_price: {e}") from e
    var = np.maximum(sigma * sigma, eps)
    return float(np.mean(0.5 * (np.log(var) + (y - mu) ** 2 / var)))


def elasticity_sign(spec: MarketSpec, segment: int, o_low: float = 15.0, o_high: float = 150.0) -> int:
    """Sign of the designed log-price change between two offer durations."""
    e = spec.segment_elasticities[segment]
    delta = float(e.log_effect(np.asarray([o_high]))[0] - e.log_effect(np.asarray([o_low]))[0])
    if delta > 0:
        return 1
    if delta < 0:
        return -1
    return 0
