import os
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed

from utils.errors import (
    ColumnCollisionError,
    ConfigError,
    DuplicateTimestampError,
    FutureBoostError,
    UnknownColumnError,
    UnparsableTimestampError,
)
from utils.encoding_utils import EncodingUtils
from utils.fs_utils import FSUtils
from utils.logger import Logger
from utils.timeseries import TIMESTAMP_COLUMN, AvailabilityClass, TimeSeriesTable, describe_table

IMPUTE_MODES = ('mask', 'ffill')
DATE_FORMAT = '%Y-%m-%dT%H:%M:%S'


@dataclass(frozen=True)
class ColumnSpec:
    source_file: str
    source_column: str
    canonical_name: str
    availability: AvailabilityClass
    unit: str = ''


def meta_path(filepath: str) -> str:
    root, _ = os.path.splitext(filepath)
    return f"{root}.meta.json"


class IngestManager:
    """Manager class for loading, aligning and persisting time-series tables."""

    def __init__(self, jobs: int = 1):
        self.logger = Logger()
        self.encoding_utils = EncodingUtils()
        self.fs = FSUtils()
        self.jobs = jobs

    def load_registry(self, filepath: str) -> List[ColumnSpec]:
        """
        Load a column registry (YAML).

        Expected layout::

            columns:
              - file: prices.csv
                source_column: price
                canonical_name: day_ahead_price
                availability: target
                unit: CNY/MWh

        Relative file paths resolve against the registry's directory.
        """
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
            unknown = set(data) - {'columns', 'resolution'}
            if unknown:
                raise ConfigError(f"Unknown registry keys: {sorted(unknown)}")

            base = os.path.dirname(os.path.abspath(filepath))
            specs = []
            for entry in data.get('columns', []):
                extra = set(entry) - {'file', 'source_column', 'canonical_name', 'availability', 'unit'}
                if extra:
                    raise ConfigError(f"Unknown registry entry keys: {sorted(extra)}")
                source = entry['file']
                if not os.path.isabs(source):
                    source = os.path.join(base, source)
                try:
                    availability = AvailabilityClass(entry['availability'])
                except ValueError:
                    raise ConfigError(f"Unknown availability '{entry['availability']}' for {entry['canonical_name']}")
                specs.append(ColumnSpec(
                    source_file=source,
                    source_column=str(entry['source_column']),
                    canonical_name=str(entry['canonical_name']),
                    availability=availability,
                    unit=str(entry.get('unit', '')),
                ))
            self.logger.info(f"📋 Loaded {len(specs)} column specs from {filepath}")
            return specs

        except Exception as e:
            self.logger.error(f"❌ Failed to load registry {filepath}: {str(e)}")
            raise

    def _read_source(self, filepath: str, columns: Sequence[str]) -> pd.DataFrame:
        """Parse one source file into a timestamp-indexed frame of ``columns``."""
        frame = pd.read_csv(
            self.encoding_utils.open_text_safely(filepath),
            dtype=str,
            keep_default_na=False,
            na_values=[''],
        )
        if TIMESTAMP_COLUMN not in frame.columns:
            raise UnparsableTimestampError(f"{filepath}: no '{TIMESTAMP_COLUMN}' column")
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise UnknownColumnError(f"{filepath}: columns not found: {missing}")

        raw = frame[TIMESTAMP_COLUMN]
        stamps = pd.to_datetime(raw, format='ISO8601', errors='coerce')
        bad = stamps.isna()
        if bad.any():
            raise UnparsableTimestampError(f"{filepath}: unparsable timestamp '{raw[bad].iloc[0]}'")
        if getattr(stamps.dt, 'tz', None) is not None:
            stamps = stamps.dt.tz_localize(None)
        dupes = stamps.duplicated()
        if dupes.any():
            raise DuplicateTimestampError(f"{filepath}: duplicate timestamp {stamps[dupes].iloc[0]}")

        values = {}
        for column in columns:
            try:
                values[column] = pd.to_numeric(frame[column], errors='raise').astype(np.float64).to_numpy()
            except (TypeError, ValueError) as e:
                raise FutureBoostError(f"{filepath}: non-numeric value in column '{column}': {e}")
        out = pd.DataFrame(values, index=pd.DatetimeIndex(stamps, name=TIMESTAMP_COLUMN))
        return out.sort_index()

    def ingest_sources(self, specs: Sequence[ColumnSpec], resolution: int,
                       impute: str = 'mask') -> TimeSeriesTable:
        """
        Align every registered source column into one table.

        Rows are the union of all source timestamps; cells a source does not
        cover stay missing unless ``impute='ffill'`` (exogenous columns only).
        """
        try:
            if impute not in IMPUTE_MODES:
                raise ConfigError(f"impute must be one of {IMPUTE_MODES}, got '{impute}'")
            names = [s.canonical_name for s in specs]
            if len(set(names)) != len(names):
                dupes = sorted({n for n in names if names.count(n) > 1})
                raise ColumnCollisionError(f"Canonical names used twice: {dupes}")

            by_file: Dict[str, List[ColumnSpec]] = {}
            for spec in specs:
                by_file.setdefault(spec.source_file, []).append(spec)
            files = list(by_file)

            self.logger.info(f"📥 Ingesting {len(specs)} columns from {len(files)} sources")
            frames = Parallel(n_jobs=self.jobs, prefer='threads')(
                delayed(self._read_source)(f, [s.source_column for s in by_file[f]]) for f in files
            )

            renamed = []
            for filepath, frame in zip(files, frames):
                mapping = {s.source_column: s.canonical_name for s in by_file[filepath]}
                renamed.append(frame.rename(columns=mapping)[list(mapping.values())])
            joined = pd.concat(renamed, axis=1, join='outer').sort_index()[names]
            joined.index.name = TIMESTAMP_COLUMN

            availability = {s.canonical_name: s.availability for s in specs}
            if impute == 'ffill':
                exogenous = [n for n in names if availability[n] != AvailabilityClass.TARGET]
                joined[exogenous] = joined[exogenous].ffill()

            table = TimeSeriesTable(joined, availability, resolution, {s.canonical_name: s.unit for s in specs})
            self.logger.success(f"✅ Ingested table: {describe_table(table)}")
            return table

        except Exception as e:
            self.logger.error(f"❌ Ingestion failed: {str(e)}")
            raise

    def write_table(self, table: TimeSeriesTable, filepath: str):
        """Canonical CSV (timestamp first, empty field = missing) plus metadata sidecar."""
        frame = table.frame.copy()
        frame.index.name = TIMESTAMP_COLUMN
        self.fs.atomic_write_text(filepath, frame.to_csv(date_format=DATE_FORMAT, lineterminator='\n'))
        meta = {
            'resolution': table.resolution,
            'columns': table.columns,
            'availability': {c: table.availability[c].value for c in table.columns},
            'units': {c: table.units.get(c, '') for c in table.columns},
        }
        self.fs.atomic_write_text(meta_path(filepath), json.dumps(meta, indent=2, sort_keys=True) + '\n')
        self.logger.info(f"💾 Wrote table {filepath} ({len(table)} rows)")

    def load_table(self, filepath: str) -> TimeSeriesTable:
        try:
            with open(meta_path(filepath), 'r', encoding='utf-8') as f:
                meta = json.load(f)
            frame = pd.read_csv(
                self.encoding_utils.open_text_safely(filepath),
                index_col=TIMESTAMP_COLUMN,
                keep_default_na=False,
                na_values=[''],
                float_precision='round_trip',
            )
            frame.index = pd.DatetimeIndex(pd.to_datetime(frame.index, format='ISO8601'), name=TIMESTAMP_COLUMN)
            unknown = [c for c in frame.columns if c not in meta['availability']]
            if unknown:
                raise UnknownColumnError(f"{filepath}: columns missing from metadata: {unknown}")
            availability = {c: AvailabilityClass(meta['availability'][c]) for c in frame.columns}
            return TimeSeriesTable(frame[meta['columns']], availability, int(meta['resolution']), meta.get('units', {}))

        except Exception as e:
            self.logger.error(f"❌ Failed to load table {filepath}: {str(e)}")
            raise

    def ingest(self, registry_path: str, resolution: Optional[int] = None, impute: str = 'mask') -> TimeSeriesTable:
        """Registry file in, aligned table out."""
        specs = self.load_registry(registry_path)
        if resolution is None:
            with open(registry_path, 'r', encoding='utf-8') as f:
                resolution = int((yaml.safe_load(f) or {}).get('resolution', 15))
        return self.ingest_sources(specs, resolution, impute=impute)
