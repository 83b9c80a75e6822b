"""Named covariate schemas (curated future-available variable sets)."""
import re
from typing import Dict, List

from utils.errors import ConfigError

# Shanxi-style curated set: 4 constructed factors, 8 operation plans and
# generation forecasts, 3 calendar fields, 12 weather summary statistics.
IC27 = [
    'thermal_auction_space',
    'thermal_auction_space_st',
    'renewable_ratio_load',
    'renewable_ratio_power',
    'system_load_forecast',
    'day_ahead_interconnection_plan_total',
    'non_market_unit_output',
    'transmission_available_capacity_yanhuai',
    'forecast_total_power',
    'forecast_wind_power',
    'forecast_pv_power',
    'forecast_new_energy_total',
    'month',
    'weekday',
    'day',
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
]

# Source headers as published by the European transparency platform exports.
REALE_FR_SOURCE = [
    'genf_Scheduled Generation',
    'ntc_Net Position',
    'total_Day-ahead Total Load Forecast',
    'total_Actual Total Load',
    'Biomass - Actual Aggregated',
    'Fossil Gas - Actual Aggregated',
    'Fossil Hard coal - Actual Aggregated',
    'Fossil Oil - Actual Aggregated',
    'Hydro Pumped Storage - Actual Aggregated',
    'Hydro Run-of-river and poundage - Actual Aggregated',
    'Hydro Water Reservoir - Actual Aggregated',
    'Nuclear - Actual Aggregated',
    'Solar - Actual Aggregated',
    'Waste - Actual Aggregated',
    'Wind Onshore - Actual Aggregated',
]

REALE_DE_SOURCE = [
    'genf_Scheduled Generation',
    'ntc_Net Position',
    'total_Actual Total Load',
    'Biomass - Actual Aggregated',
    'Fossil Brown coal/Lignite - Actual Aggregated',
    'Fossil Gas - Actual Aggregated',
    'Fossil Hard coal - Actual Aggregated',
    'Fossil Oil - Actual Aggregated',
    'Geothermal - Actual Aggregated',
    'Hydro Pumped Storage - Actual Aggregated',
    'Hydro Run-of-river and poundage - Actual Aggregated',
    'Hydro Water Reservoir - Actual Aggregated',
    'Nuclear - Actual Aggregated',
    'Other renewable - Actual Aggregated',
    'Solar - Actual Aggregated',
    'Waste - Actual Aggregated',
    'Wind Offshore - Actual Aggregated',
    'Wind Onshore - Actual Aggregated',
    'Other - Actual Aggregated',
]

CALENDAR_FIELDS = ['month', 'weekday', 'day']


def canonical_name(source_column: str) -> str:
    """Lower-case snake_case name for a source header."""
    name = re.sub(r'[^0-9a-zA-Z]+', '_', source_column).strip('_').lower()
    return name


SCHEMAS: Dict[str, List[str]] = {
    'ic27': IC27,
    'reale_fr': [canonical_name(c) for c in REALE_FR_SOURCE],
    'reale_de': [canonical_name(c) for c in REALE_DE_SOURCE],
}


def get_schema(name: str) -> List[str]:
    if name not in SCHEMAS:
        raise ConfigError(f"Unknown feature schema '{name}' (available: {sorted(SCHEMAS)})")
    return list(SCHEMAS[name])
