import os
import datetime as dt
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, Optional

import numpy as np
import pandas as pd
import scipy.signal
import yaml

from utils.errors import InvalidSpecError, SpecTableMismatchError
from utils.logger import Logger
from utils.timeseries import SUPPORTED_RESOLUTIONS, AvailabilityClass, TimeSeriesTable, steps_per_day

# One independent Philox stream per component, in this order. Adding a
# component means appending here so earlier streams keep their draws.
STREAMS = ('load', 'wind', 'solar', 'grid', 'thermal', 'plans', 'weather', 'price', 'jumps', 'noise', 'real_time')

DECOMPOSITION_TERMS = ('base', 'load_term', 'renewable_term', 'spike_term', 'noise')

FUTURE_COLUMNS = (
    'thermal_capacity_plan',
    'thermal_committed_plan',
    'thermal_committed_st',
    'system_load_forecast',
    'day_ahead_interconnection_plan_total',
    'non_market_unit_output',
    'transmission_available_capacity_yanhuai',
    'forecast_total_power',
    'forecast_wind_power',
    'forecast_pv_power',
    'forecast_new_energy_total',
    'dew_point_2m_mean',
    'dew_point_2m_max',
    'dew_point_2m_min',
    'temperature_2m_mean',
    'temperature_2m_max',
    'relative_humidity_2m_mean',
    'cloud_cover_low_max',
    'precipitation_probability_mean',
    'extraterrestrial_ghi_mean',
    'surface_pressure_mean',
    'pressure_msl_mean',
    'pressure_msl_min',
)
HISTORICAL_COLUMNS = ('system_load', 'wind_power', 'pv_power')
TARGET_COLUMNS = ('day_ahead_price', 'real_time_price')


@dataclass(frozen=True)
class ScenarioSpec:
    """Synthetic market scenario; identical specs generate bit-identical tables."""

    seed: int = 42
    days: int = 365
    start: str = '2025-01-01'
    resolution: int = 15
    # load: daily shape x weekly factor x seasonal swing x AR(1) daily level
    load_mean: float = 30000.0
    load_daily_amplitude: float = 0.12
    load_seasonal_amplitude: float = 0.08
    weekend_factor: float = 0.93
    load_level_phi: float = 0.9
    load_level_sigma: float = 0.02
    # renewables and thermal fleet
    wind_capacity: float = 12000.0
    solar_capacity: float = 10000.0
    wind_scale: float = 1.0
    solar_scale: float = 1.0
    thermal_capacity: float = 36000.0
    interconnection_mean: float = 3000.0
    non_market_mean: float = 2000.0
    plan_noise: float = 0.03
    # price link
    price_base: float = 350.0
    price_level_phi: float = 0.85
    price_level_sigma: float = 60.0
    price_ar_phi: float = 0.95
    price_ar_sigma: float = 10.0
    load_coef: float = 600.0
    renewable_coef: float = 400.0
    spike_size: float = 800.0
    headroom_center: float = 0.55
    headroom_scale: float = 0.1
    jump_intensity: float = 2.0
    jump_min_steps: int = 1
    jump_max_steps: int = 4
    noise_scale: float = 15.0
    noise_df: float = 4.0
    real_time_noise_scale: float = 40.0
    real_time_noise_df: float = 3.0

    def __post_init__(self):
        if self.days < 1:
            raise InvalidSpecError(f"days must be >= 1, got {self.days}")
        if self.resolution not in SUPPORTED_RESOLUTIONS:
            raise InvalidSpecError(f"resolution must be one of {SUPPORTED_RESOLUTIONS}, got {self.resolution}")
        for name in ('load_mean', 'thermal_capacity', 'headroom_scale', 'noise_df', 'real_time_noise_df'):
            if not getattr(self, name) > 0:
                raise InvalidSpecError(f"{name} must be positive")
        for name in ('wind_capacity', 'solar_capacity', 'wind_scale', 'solar_scale', 'plan_noise',
                     'price_ar_sigma', 'price_level_sigma', 'spike_size', 'jump_intensity', 'noise_scale',
                     'real_time_noise_scale', 'load_level_sigma', 'interconnection_mean', 'non_market_mean'):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f"{name} must be non-negative")
        for name in ('price_ar_phi', 'price_level_phi', 'load_level_phi'):
            if not 0 <= getattr(self, name) < 1:
                raise InvalidSpecError(f"{name} must be in [0, 1)")
        if not 1 <= self.jump_min_steps <= self.jump_max_steps:
            raise InvalidSpecError("jump steps must satisfy 1 <= jump_min_steps <= jump_max_steps")
        try:
            dt.date.fromisoformat(str(self.start))
        except ValueError:
            raise InvalidSpecError(f"start must be an ISO date, got '{self.start}'")

    @property
    def steps_per_day(self) -> int:
        return steps_per_day(self.resolution)

    @property
    def n_steps(self) -> int:
        return self.days * self.steps_per_day

    def index(self) -> pd.DatetimeIndex:
        return pd.date_range(pd.Timestamp(self.start), periods=self.n_steps, freq=f"{self.resolution}min",
                             name='timestamp')

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'ScenarioSpec':
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpecError(f"Unknown scenario keys: {sorted(unknown)}")
        if 'start' in data:
            data['start'] = str(data['start'])
        try:
            return cls(**data)
        except TypeError as e:
            raise InvalidSpecError(str(e))


def load_scenario(filepath: str, seed: Optional[int] = None) -> ScenarioSpec:
    """YAML scenario file; ``seed`` (the run seed) replaces the file's seed when given."""
    if not os.path.exists(filepath):
        raise InvalidSpecError(f"Scenario file not found: {filepath}")
    with open(filepath, 'r', encoding='utf-8') as f:
        spec = ScenarioSpec.from_dict(yaml.safe_load(f) or {})
    return replace(spec, seed=seed) if seed is not None else spec


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    """Stationary zero-mean AR(1) path of length n."""
    e = rng.standard_normal(n)
    e[0] /= np.sqrt(1.0 - phi * phi)
    return scipy.signal.lfilter([sigma], [1.0, -phi], e)


WEATHER_UNITS = (
    ('temperature', '°C'),
    ('dew_point', '°C'),
    ('relative_humidity', '%'),
    ('cloud_cover', '%'),
    ('precipitation', '%'),
    ('extraterrestrial_ghi', 'W/m2'),
    ('surface_pressure', 'hPa'),
    ('pressure_msl', 'hPa'),
)


def _unit(column: str) -> str:
    if column in TARGET_COLUMNS:
        return 'CNY/MWh'
    for prefix, unit in WEATHER_UNITS:
        if column.startswith(prefix):
            return unit
    return 'MW'


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


class SimulationManager:
    """Manager class for the synthetic electricity market."""

    def __init__(self):
        self.logger = Logger()

    def _streams(self, seed: int) -> Dict[str, np.random.Generator]:
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        return {name: np.random.Generator(np.random.Philox(child)) for name, child in zip(STREAMS, children)}

    def _simulate(self, spec: ScenarioSpec) -> Dict[str, np.ndarray]:
        """Every driver, plan, price term and price as flat step arrays."""
        rng = self._streams(spec.seed)
        H, days, n = spec.steps_per_day, spec.days, spec.n_steps
        index = spec.index()
        frac = np.tile(np.arange(H) / H, days)
        doy = np.repeat(np.array([d.dayofyear for d in index[::H]], dtype=np.float64), H)
        weekend = np.repeat(np.array([d.weekday() >= 5 for d in index[::H]]), H)

        # load
        shape = (1.0 - spec.load_daily_amplitude * np.cos(2 * np.pi * frac)
                 + 0.5 * spec.load_daily_amplitude * np.sin(4 * np.pi * (frac - 0.125)))
        season = 1.0 + spec.load_seasonal_amplitude * np.cos(2 * np.pi * (doy - 15) / 365.0)
        level = np.repeat(_ar1(rng['load'], days, spec.load_level_phi, spec.load_level_sigma), H)
        jitter = _ar1(rng['load'], n, 0.9, 0.005)
        load = spec.load_mean * shape * season * np.where(weekend, spec.weekend_factor, 1.0) * (1 + level + jitter)

        # wind: logistic transform of a persistent AR(1)
        wind_state = _ar1(rng['wind'], n, 0.995, 0.08) * 3.0 + np.log(0.35 / 0.65)
        wind = spec.wind_capacity * spec.wind_scale / (1.0 + np.exp(-wind_state))

        # solar: clear-sky arc, seasonal swing, daily cloud cover
        arc = np.clip(np.sin(np.pi * (frac - 0.25) / 0.5), 0.0, None) * ((frac >= 0.25) & (frac <= 0.75))
        sun_season = 0.8 + 0.2 * np.cos(2 * np.pi * (doy - 172) / 365.0)
        cloud_daily = np.clip(0.3 + _ar1(rng['solar'], days, 0.7, 0.15), 0.0, 0.9)
        cloud = np.repeat(cloud_daily, H)
        solar = spec.solar_capacity * spec.solar_scale * arc * sun_season * (1.0 - cloud)

        # grid schedules
        interconnection = np.clip(
            spec.interconnection_mean * (1 + 0.15 * np.sin(2 * np.pi * frac))
            + np.repeat(_ar1(rng['grid'], days, 0.8, 0.05 * spec.interconnection_mean), H), 0.0, None)
        non_market = np.clip(spec.non_market_mean + _ar1(rng['grid'], n, 0.95, 0.03 * spec.non_market_mean),
                             0.0, None)
        transmission = np.repeat(6000.0 + _ar1(rng['grid'], days, 0.9, 150.0), H)

        # thermal fleet
        capacity = spec.thermal_capacity * (1.0 + np.repeat(_ar1(rng['thermal'], days, 0.98, 0.01), H))
        committed = np.clip(load - wind - solar - interconnection - non_market, 0.15 * capacity, 0.98 * capacity)

        # day-ahead plans and forecasts
        eps = rng['plans'].standard_normal((6, n))
        pn = spec.plan_noise
        committed_plan = committed * (1 + pn * eps[0])
        committed_st = committed * (1 + 0.5 * pn * eps[1])
        load_forecast = load * (1 + pn * eps[2])
        wind_forecast = np.clip(wind * (1 + 2 * pn * eps[3]), 0.0, None)
        pv_forecast = np.clip(solar * (1 + 2 * pn * eps[4]), 0.0, None)
        new_energy = wind_forecast + pv_forecast
        total_power = committed_plan + new_energy + non_market * (1 + pn * eps[5])

        # weather summaries (daily values on every step)
        w = rng['weather'].standard_normal((4, days))
        temp_mean = 12.0 - 14.0 * np.cos(2 * np.pi * (np.array(doy[::H]) - 15) / 365.0) + 2.0 * w[0]
        dew_mean = temp_mean - 6.0 - 2.0 * cloud_daily
        weather = {
            'dew_point_2m_mean': dew_mean,
            'dew_point_2m_max': dew_mean + 3.0,
            'dew_point_2m_min': dew_mean - 3.0,
            'temperature_2m_mean': temp_mean,
            'temperature_2m_max': temp_mean + 5.0 + w[1],
            'relative_humidity_2m_mean': np.clip(55.0 + 30.0 * cloud_daily + 3.0 * w[2], 0.0, 100.0),
            'cloud_cover_low_max': 100.0 * cloud_daily,
            'precipitation_probability_mean': 100.0 * np.clip(cloud_daily - 0.2, 0.0, 1.0),
            'extraterrestrial_ghi_mean': 1361.0 * (0.5 + 0.3 * np.cos(2 * np.pi * (np.array(doy[::H]) - 172) / 365.0)),
            'surface_pressure_mean': 900.0 + 4.0 * w[3],
            'pressure_msl_mean': 1013.0 + 4.0 * w[3],
            'pressure_msl_min': 1010.0 + 4.0 * w[3],
        }
        weather = {k: np.repeat(v, H) for k, v in weather.items()}

        # jump overlay: Poisson events per day, each a run of consecutive steps
        counts = rng['jumps'].poisson(spec.jump_intensity, days)
        total = int(counts.sum())
        starts = rng['jumps'].integers(0, H, total)
        lengths = rng['jumps'].integers(spec.jump_min_steps, spec.jump_max_steps + 1, total)
        event_days = np.repeat(np.arange(days), counts)
        jump = np.zeros(n)
        for day, start, length in zip(event_days, starts, lengths):
            first = day * H + start
            jump[first:min(first + length, n)] = 1.0

        # price
        headroom = (capacity - committed) / load
        renewable_ratio = (wind + solar) / load
        # slow daily price level (persists into the next day) plus fast intraday deviations
        price_level = np.repeat(_ar1(rng['price'], days, spec.price_level_phi, spec.price_level_sigma), H)
        base = spec.price_base + price_level + _ar1(rng['price'], n, spec.price_ar_phi, spec.price_ar_sigma)
        load_term = spec.load_coef * (load / spec.load_mean - 1.0)
        renewable_term = -spec.renewable_coef * renewable_ratio
        spike_term = spec.spike_size * _softplus(-(headroom - spec.headroom_center) / spec.headroom_scale) * jump
        noise = spec.noise_scale * rng['noise'].standard_t(spec.noise_df, n)
        price = base + load_term + renewable_term + spike_term + noise
        real_time = price + spec.real_time_noise_scale * rng['real_time'].standard_t(spec.real_time_noise_df, n)

        return {
            'day_ahead_price': price,
            'real_time_price': real_time,
            'system_load': load,
            'wind_power': wind,
            'pv_power': solar,
            'thermal_capacity_plan': capacity,
            'thermal_committed_plan': committed_plan,
            'thermal_committed_st': committed_st,
            'system_load_forecast': load_forecast,
            'day_ahead_interconnection_plan_total': interconnection,
            'non_market_unit_output': non_market,
            'transmission_available_capacity_yanhuai': transmission,
            'forecast_total_power': total_power,
            'forecast_wind_power': wind_forecast,
            'forecast_pv_power': pv_forecast,
            'forecast_new_energy_total': new_energy,
            **weather,
            'base': base,
            'load_term': load_term,
            'renewable_term': renewable_term,
            'spike_term': spike_term,
            'noise': noise,
            'jump_indicator': jump,
        }

    def generate(self, spec: ScenarioSpec) -> TimeSeriesTable:
        """Synthetic market panel with prices tagged target, realized drivers
        historical and plans, forecasts and weather future-available."""
        try:
            sim = self._simulate(spec)
            columns = list(TARGET_COLUMNS) + list(HISTORICAL_COLUMNS) + list(FUTURE_COLUMNS)
            frame = pd.DataFrame({c: sim[c] for c in columns}, index=spec.index())
            availability = {c: AvailabilityClass.TARGET for c in TARGET_COLUMNS}
            availability.update({c: AvailabilityClass.HISTORICAL_EXOGENOUS for c in HISTORICAL_COLUMNS})
            availability.update({c: AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS for c in FUTURE_COLUMNS})
            units = {c: _unit(c) for c in columns}
            table = TimeSeriesTable(frame, availability, spec.resolution, units)
            self.logger.success(f"🎲 Simulated {spec.days} days × {spec.steps_per_day} steps "
                                f"(seed {spec.seed}, {int(sim['jump_indicator'].sum())} spike steps)")
            return table

        except Exception as e:
            self.logger.error(f"❌ Simulation failed: {str(e)}")
            raise

    def oracle_decomposition(self, spec: ScenarioSpec, table: TimeSeriesTable) -> pd.DataFrame:
        """
        Additive price terms per step; their sum in column order equals the
        day-ahead price exactly.

        Raises:
            SpecTableMismatchError: ``table`` was not generated from ``spec``
        """
        expected = spec.index()
        if not table.index.equals(expected):
            raise SpecTableMismatchError(f"Table index ({len(table)} rows) does not match the scenario "
                                         f"({spec.n_steps} steps from {spec.start})")
        sim = self._simulate(spec)
        if 'day_ahead_price' not in table.frame.columns or not np.array_equal(
                table.values('day_ahead_price'), sim['day_ahead_price']):
            raise SpecTableMismatchError("Day-ahead prices differ from the scenario's prices")
        return pd.DataFrame({t: sim[t] for t in DECOMPOSITION_TERMS}, index=expected)
