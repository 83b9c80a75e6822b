"""Run configuration: one YAML file, flags only for overrides."""
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import psutil
import yaml
from dotenv import load_dotenv

from models.forecasters import ForecasterSpec
from models.gbdt import GbdtParams
from utils.errors import ConfigError, FutureBoostError
from utils.features import FactorSpec, default_factor_specs

CACHE_ENV_VAR = 'FUTUREBOOST_CACHE_DIR'
MODES = ('shanxi_like', 'reale_like')
TARGETS = {'day_ahead': 'day_ahead_price', 'real_time': 'real_time_price'}
REGRESSORS = ('gbdt', 'ridge')
SCHEMES = ('rolling', 'ratio')
DEFAULT_VARIABLES = ['day_ahead_price', 'system_load', 'wind_power', 'pv_power']
DEFAULT_SEED = 42


def _check_keys(section: str, data: Mapping, allowed) -> dict:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"Section '{section}' must be a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"Unknown keys in '{section}': {sorted(unknown)}")
    return dict(data)


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


@dataclass(frozen=True)
class PathsConfig:
    data: str
    cache: str
    output: str
    registry: Optional[str] = None
    scenario: Optional[str] = None


@dataclass(frozen=True)
class Stage1Config:
    variables: List[str]
    specs: Dict[str, ForecasterSpec]


@dataclass(frozen=True)
class FeaturesConfig:
    future_columns: Union[str, List[str], None]
    factors: List[FactorSpec]
    calendar: bool = True


@dataclass(frozen=True)
class RegressorConfig:
    kind: str
    gbdt: GbdtParams
    ridge_l2: float = 1.0
    compare: bool = False
    merge_validation: bool = False

    @property
    def other(self) -> str:
        return 'ridge' if self.kind == 'gbdt' else 'gbdt'


@dataclass(frozen=True)
class ProtocolConfig:
    scheme: str = 'rolling'
    months: Tuple[str, ...] = ()
    train_m: int = 12
    val_m: int = 2
    workday_filter: bool = False
    holidays: Optional[str] = None
    ratios: Tuple[float, float, float] = (0.7, 0.1, 0.2)
    start: Optional[str] = None
    end: Optional[str] = None


@dataclass(frozen=True)
class ExplainConfig:
    top_k: int = 10
    max_rows: int = 500


@dataclass(frozen=True)
class MetricsConfig:
    extreme_threshold: float = 1000.0
    jump_threshold: float = 200.0


@dataclass(frozen=True)
class RunConfig:
    source: str
    seed: int
    jobs: int
    mode: str
    target: str
    paths: PathsConfig
    stage1: Stage1Config
    features: FeaturesConfig
    regressor: RegressorConfig
    protocol: ProtocolConfig
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    @property
    def target_column(self) -> str:
        return TARGETS[self.target]

    @property
    def standardize(self) -> bool:
        return self.mode == 'reale_like'

    @classmethod
    def load(cls, filepath: str, overrides: Optional[Mapping] = None) -> 'RunConfig':
        """
        Parse and validate a run config.

        ``overrides`` may carry ``seed`` and ``jobs`` from the command line.
        The cache directory comes from ``FUTUREBOOST_CACHE_DIR`` when set
        (environment or ``.env``).

        Raises:
            ConfigError: malformed YAML, unknown keys, bad values or missing referenced files
        """
        load_dotenv()
        if not os.path.exists(filepath):
            raise ConfigError(f"Config file not found: {filepath}")
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Malformed YAML in {filepath}: {e}")
        try:
            return cls._from_data(data, filepath, dict(overrides or {}))
        except FutureBoostError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid config {filepath}: {type(e).__name__}: {e}")

    @classmethod
    def _from_data(cls, data, filepath: str, overrides: dict) -> 'RunConfig':
        data = _check_keys('root', data, {'seed', 'jobs', 'mode', 'target', 'paths', 'stage1', 'features',
                                          'regressor', 'protocol', 'explain', 'metrics'})
        base = os.path.dirname(os.path.abspath(filepath))

        def resolve(path, must_exist=False):
            if path is None:
                return None
            resolved = path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))
            if must_exist and not os.path.exists(resolved):
                raise ConfigError(f"Referenced file not found: {resolved}")
            return resolved

        seed = int(overrides.get('seed') if overrides.get('seed') is not None else data.get('seed', DEFAULT_SEED))
        jobs = overrides.get('jobs') if overrides.get('jobs') is not None else data.get('jobs')
        jobs = int(jobs) if jobs is not None else default_jobs()
        if jobs < 1:
            raise ConfigError("jobs must be >= 1")

        mode = data.get('mode', 'shanxi_like')
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{mode}'")
        target = data.get('target', 'day_ahead')
        if target not in TARGETS:
            raise ConfigError(f"target must be one of {sorted(TARGETS)}, got '{target}'")

        p = _check_keys('paths', data.get('paths'), {'data', 'cache', 'output', 'registry', 'scenario'})
        cache = os.environ.get(CACHE_ENV_VAR) or resolve(p.get('cache', 'cache'))
        paths = PathsConfig(
            data=resolve(p.get('data', 'data/market.csv')),
            cache=cache,
            output=resolve(p.get('output', 'out')),
            registry=resolve(p.get('registry'), must_exist=True),
            scenario=resolve(p.get('scenario'), must_exist=True),
        )

        s = _check_keys('stage1', data.get('stage1'), {'variables', 'default', 'per_variable'})
        variables = list(s.get('variables') or DEFAULT_VARIABLES)
        default_spec = s.get('default') or {'kind': 'ridge_lag_ar'}
        per_variable = s.get('per_variable') or {}
        unknown_vars = set(per_variable) - set(variables) - {TARGETS[target]}
        if unknown_vars:
            raise ConfigError(f"per_variable forecasters for unlisted variables: {sorted(unknown_vars)}")
        specs = {}
        for variable in sorted(set(variables) | {TARGETS[target]}):
            raw = dict(per_variable.get(variable, default_spec))
            if raw.get('kind') == 'external_file':
                params = dict(raw.get('params') or {})
                if 'path' not in params:
                    raise ConfigError(f"external_file forecaster for '{variable}' needs params.path")
                params['path'] = resolve(params['path'], must_exist=True)
                raw['params'] = params
            specs[variable] = ForecasterSpec.from_dict(raw)

        fe = _check_keys('features', data.get('features'), {'future_columns', 'factors', 'calendar'})
        factors_raw = fe.get('factors', 'default' if mode == 'shanxi_like' else None)
        if factors_raw == 'default':
            factors = default_factor_specs()
        elif factors_raw is None:
            factors = []
        else:
            factors = [FactorSpec.from_dict(f) for f in factors_raw]
        features = FeaturesConfig(
            future_columns=fe.get('future_columns', 'ic27'),
            factors=factors,
            calendar=bool(fe.get('calendar', True)),
        )

        r = _check_keys('regressor', data.get('regressor'), {'kind', 'gbdt', 'ridge', 'compare', 'merge_validation'})
        kind = r.get('kind', 'gbdt')
        if kind not in REGRESSORS:
            raise ConfigError(f"regressor.kind must be one of {REGRESSORS}, got '{kind}'")
        gbdt_raw = dict(r.get('gbdt') or {})
        gbdt_raw['seed'] = seed
        ridge = _check_keys('regressor.ridge', r.get('ridge'), {'l2'})
        merge = r.get('merge_validation')
        regressor = RegressorConfig(
            kind=kind,
            gbdt=GbdtParams.from_dict(gbdt_raw),
            ridge_l2=float(ridge.get('l2', 1.0)),
            compare=bool(r.get('compare', False)),
            merge_validation=bool(mode == 'reale_like' if merge is None else merge),
        )

        pr = _check_keys('protocol', data.get('protocol'), {'scheme', 'months', 'train_m', 'val_m',
                                                            'workday_filter', 'holidays', 'ratios', 'start', 'end'})
        scheme = pr.get('scheme', 'rolling')
        if scheme not in SCHEMES:
            raise ConfigError(f"protocol.scheme must be one of {SCHEMES}, got '{scheme}'")
        protocol = ProtocolConfig(
            scheme=scheme,
            months=tuple(str(m) for m in pr.get('months') or ()),
            train_m=int(pr.get('train_m', 12)),
            val_m=int(pr.get('val_m', 2)),
            workday_filter=bool(pr.get('workday_filter', mode == 'shanxi_like')),
            holidays=resolve(pr.get('holidays'), must_exist=True),
            ratios=tuple(float(x) for x in pr.get('ratios', (0.7, 0.1, 0.2))),
            start=str(pr['start']) if pr.get('start') else None,
            end=str(pr['end']) if pr.get('end') else None,
        )
        if scheme == 'rolling' and not protocol.months:
            raise ConfigError("protocol.months must list at least one test month")
        if scheme == 'ratio' and not (protocol.start and protocol.end):
            raise ConfigError("protocol.start and protocol.end are required for the ratio scheme")

        ex = _check_keys('explain', data.get('explain'), {'top_k', 'max_rows'})
        me = _check_keys('metrics', data.get('metrics'), {'extreme_threshold', 'jump_threshold'})

        return cls(
            source=os.path.abspath(filepath),
            seed=seed,
            jobs=jobs,
            mode=mode,
            target=target,
            paths=paths,
            stage1=Stage1Config(variables=variables, specs=specs),
            features=features,
            regressor=regressor,
            protocol=protocol,
            explain=ExplainConfig(**{k: int(v) for k, v in ex.items()}),
            metrics=MetricsConfig(**{k: float(v) for k, v in me.items()}),
        )

    def plan(self) -> dict:
        """Resolved plan printed by ``--dry-run``."""
        return {
            'config': self.source,
            'seed': self.seed,
            'jobs': self.jobs,
            'mode': self.mode,
            'target': self.target_column,
            'paths': asdict(self.paths),
            'stage1': {
                'variables': self.stage1.variables,
                'forecasters': {v: s.forecaster_id for v, s in sorted(self.stage1.specs.items())},
            },
            'features': {
                'future_columns': self.features.future_columns,
                'factors': [f.name for f in self.features.factors],
                'calendar': self.features.calendar,
            },
            'regressor': {
                'kind': self.regressor.kind,
                'gbdt': self.regressor.gbdt.to_dict(),
                'ridge_l2': self.regressor.ridge_l2,
                'compare': self.regressor.compare,
                'merge_validation': self.regressor.merge_validation,
            },
            'protocol': asdict(self.protocol),
        }
