"""Run configuration: a TOML or JSON file, overridable from the command line."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .ingest import DEFAULT_FIDELITY_MIN, Disease

_PATH_FIELDS = ("fixture", "surveillance_dir", "hub_path", "cache_dir", "output_dir", "manifest")


@dataclass
class ArimaSettings:
    enabled: bool = True
    max_p: int = 3
    max_q: int = 3
    max_d: int = 2


@dataclass
class RunConfig:
    disease: str = "influenza"
    # surveillance series settling this disease's markets
    target_key: str = ""
    markets: list[str] = field(default_factory=list)
    fixture: Path | None = None
    surveillance_dir: Path | None = None
    hub_path: Path | None = None
    hub_target: str = ""
    ensemble_model: str = "ensemble"
    cache_dir: Path = Path(".pmeval-cache")
    manifest: Path | None = None
    offline: bool = False
    fidelity_minutes: int = DEFAULT_FIDELITY_MIN
    kappa: float = 1.0
    grid_step: float = 0.01
    output_dir: Path = Path("out")
    seed: int = 0
    workers: int = 4
    arima: ArimaSettings = field(default_factory=ArimaSettings)

    def validate(self, need_surveillance: bool = True) -> None:
        try:
            Disease(self.disease)
        except ValueError:
            raise ConfigError(f"unknown disease {self.disease!r}") from None
        if need_surveillance:
            if self.surveillance_dir is None:
                raise ConfigError("surveillance_dir is not set")
            if not self.surveillance_dir.exists():
                raise ConfigError(f"surveillance data not found: {self.surveillance_dir}")
            if not self.target_key:
                raise ConfigError("target_key is not set")
        if self.fixture is not None and not self.fixture.exists():
            raise ConfigError(f"fixture not found: {self.fixture}")
        if self.fixture is None and not self.markets:
            raise ConfigError("configure either a fixture path or a list of market ids")
        if self.offline and self.fixture is None and not self.cache_dir.exists():
            raise ConfigError(f"offline mode needs a fixture or an existing cache "
                              f"({self.cache_dir} is missing)")
        if self.hub_path is not None and not self.hub_path.exists():
            raise ConfigError(f"hub forecasts not found: {self.hub_path}")
        if self.hub_path is not None and not self.hub_target:
            raise ConfigError("hub_target must name the hub target to read")
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if self.fidelity_minutes < 1:
            raise ConfigError(f"fidelity_minutes must be >= 1, got {self.fidelity_minutes}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        n = round(1.0 / self.grid_step) if self.grid_step > 0 else 0
        if n < 1 or abs(n * self.grid_step - 1.0) > 1e-9:
            raise ConfigError(f"grid_step {self.grid_step} does not divide 1 evenly")

    def describe(self) -> dict[str, Any]:
        """JSON-safe view, used in run metadata."""
        out = asdict(self)
        for k in _PATH_FIELDS:
            if out[k] is not None:
                out[k] = Path(out[k]).as_posix()
        return out


def _read(path: Path) -> Mapping[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None


def from_mapping(doc: Mapping[str, Any], base: Path | None = None) -> RunConfig:
    """Build a config from a parsed document; relative paths resolve against ``base``."""
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    kwargs = dict(doc)
    if "arima" in kwargs:
        try:
            kwargs["arima"] = ArimaSettings(**kwargs["arima"])
        except TypeError as exc:
            raise ConfigError(f"bad [arima] table: {exc}") from None
    for k in _PATH_FIELDS:
        if kwargs.get(k) is not None:
            p = Path(kwargs[k])
            kwargs[k] = p if p.is_absolute() or base is None else base / p
    if "markets" in kwargs:
        kwargs["markets"] = [str(m) for m in kwargs["markets"]]
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return from_mapping(_read(path), base=path.parent)
