"""Market price histories: HTTP retrieval, JSON cache and fixture loading.

Fixtures and the cache share one schema, one JSON document per market::

    {"market_id": "...", "disease": "influenza" | "measles",
     "structure": "range_bins" | "thresholds",
     "resolution_time": "2026-01-17T23:59:59Z",
     "contracts": [{"contract_id": "...", "label": "...", "points": [[t, p], ...]}],
     "volume": [[t, usd], ...]}                       # optional

A fixture file may hold a single document or a JSON array of them; a
directory is read as every ``*.json`` file in name order.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

from .errors import CacheMiss, ConfigError, DecodeError, HttpError, RateLimited, SchemaError

log = logging.getLogger(__name__)

DEFAULT_FIDELITY_MIN = 60
API_BASE_ENV = "PMEVAL_API_BASE"
API_AUTH_HEADER_ENV = "PMEVAL_API_AUTH_HEADER"
API_TOKEN_ENV = "PMEVAL_API_TOKEN"
PRICE_FIELD = "API history price used as-is (no bid/ask/mid reconstruction)"


class Disease(str, Enum):
    INFLUENZA = "influenza"
    MEASLES = "measles"


class Structure(str, Enum):
    RANGE_BINS = "range_bins"
    THRESHOLDS = "thresholds"


@dataclass(frozen=True)
class ContractPriceSeries:
    contract_id: str
    label: str
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        pts = tuple((int(t), float(p)) for t, p in self.points)
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not t1 > t0:
                raise ValueError(f"{self.contract_id}: timestamps not strictly increasing at {t1}")
        for t, p in pts:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{self.contract_id}: price {p!r} at {t} outside [0, 1]")
        object.__setattr__(self, "points", pts)

    @property
    def times(self) -> list[int]:
        return [t for t, _ in self.points]


@dataclass(frozen=True)
class MarketRecord:
    market_id: str
    disease: Disease
    structure: Structure
    resolution_time: datetime
    contracts: tuple[ContractPriceSeries, ...]
    volume: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "disease", Disease(self.disease))
        object.__setattr__(self, "structure", Structure(self.structure))
        object.__setattr__(self, "contracts", tuple(self.contracts))
        if self.resolution_time.tzinfo is None:
            raise ValueError("resolution_time must be timezone-aware")
        if not self.contracts:
            raise ValueError(f"market {self.market_id}: no contracts")
        end = self.resolution_ts
        for c in self.contracts:
            if c.points and c.points[-1][0] > end:
                raise ValueError(f"market {self.market_id}: contract {c.contract_id} "
                                 f"has prices after resolution")
        if self.volume is not None:
            object.__setattr__(self, "volume",
                               tuple((int(t), float(v)) for t, v in self.volume))

    @property
    def resolution_ts(self) -> int:
        return int(self.resolution_time.timestamp())


# ------------------------------------------------------------ time helpers

def parse_time(value: str) -> datetime:
    """RFC 3339 timestamp (``Z`` suffix accepted) as an aware UTC datetime."""
    text = value.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {value!r} lacks a UTC offset")
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ------------------------------------------------------------ encode/decode

def encode_record(record: MarketRecord) -> dict:
    doc = {
        "market_id": record.market_id,
        "disease": record.disease.value,
        "structure": record.structure.value,
        "resolution_time": format_time(record.resolution_time),
        "contracts": [
            {"contract_id": c.contract_id, "label": c.label,
             "points": [[t, p] for t, p in c.points]}
            for c in record.contracts
        ],
    }
    if record.volume is not None:
        doc["volume"] = [[t, v] for t, v in record.volume]
    return doc


def dumps_record(record: MarketRecord) -> str:
    return json.dumps(encode_record(record), indent=1, sort_keys=False) + "\n"


def _require(doc: Mapping, key: str, kind, source: str, path: str):
    if key not in doc:
        raise SchemaError("missing required field", source=source, field=f"{path}{key}")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaError(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
                          source=source, field=f"{path}{key}")
    return value


def _number(value, source: str, field_path: str) -> float:
    if isinstance(value, bool):
        raise SchemaError("expected a number", source=source, field=field_path)
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise SchemaError(f"expected a number, got {value!r}", source=source, field=field_path)


def decode_record(doc: Mapping, source: str = "<memory>", path: str = "") -> MarketRecord:
    """Validate one market document; every violation is a ``SchemaError``."""
    if not isinstance(doc, Mapping):
        raise SchemaError("market document must be a JSON object", source=source, field=path or None)
    market_id = _require(doc, "market_id", str, source, path)
    disease = _require(doc, "disease", str, source, path)
    structure = _require(doc, "structure", str, source, path)
    try:
        disease = Disease(disease)
    except ValueError:
        raise SchemaError(f"unknown disease {disease!r}", source=source,
                          field=f"{path}disease") from None
    try:
        structure = Structure(structure)
    except ValueError:
        raise SchemaError(f"unknown structure {structure!r}", source=source,
                          field=f"{path}structure") from None
    try:
        resolution = parse_time(_require(doc, "resolution_time", str, source, path))
    except ValueError as exc:
        raise SchemaError(str(exc), source=source, field=f"{path}resolution_time") from None

    contracts = []
    raw_contracts = _require(doc, "contracts", list, source, path)
    if not raw_contracts:
        raise SchemaError("market has no contracts", source=source, field=f"{path}contracts")
    for i, c in enumerate(raw_contracts):
        cpath = f"{path}contracts[{i}]."
        if not isinstance(c, Mapping):
            raise SchemaError("contract must be an object", source=source, field=cpath[:-1])
        cid = _require(c, "contract_id", str, source, cpath)
        label = _require(c, "label", str, source, cpath)
        points = []
        for j, pt in enumerate(_require(c, "points", list, source, cpath)):
            fp = f"{cpath}points[{j}]"
            if not isinstance(pt, list) or len(pt) != 2:
                raise SchemaError("point must be a [t, p] pair", source=source, field=fp)
            t = _number(pt[0], source, fp + "[0]")
            p = _number(pt[1], source, fp + "[1]")
            if not 0.0 <= p <= 1.0:
                raise SchemaError(f"price {p!r} outside [0, 1]", source=source, field=fp + "[1]")
            if int(t) != t:
                raise SchemaError(f"timestamp {t!r} is not integral", source=source, field=fp + "[0]")
            if points and int(t) <= points[-1][0]:
                raise SchemaError("timestamps must be strictly increasing", source=source,
                                  field=fp + "[0]")
            points.append((int(t), float(p)))
        contracts.append(ContractPriceSeries(cid, label, tuple(points)))

    volume = None
    if doc.get("volume") is not None:
        volume = []
        for j, pt in enumerate(_require(doc, "volume", list, source, path)):
            fp = f"{path}volume[{j}]"
            if not isinstance(pt, list) or len(pt) != 2:
                raise SchemaError("volume point must be a [t, usd] pair", source=source, field=fp)
            t = _number(pt[0], source, fp + "[0]")
            v = _number(pt[1], source, fp + "[1]")
            if v < 0:
                raise SchemaError("negative volume", source=source, field=fp + "[1]")
            volume.append((int(t), float(v)))
    try:
        return MarketRecord(market_id, disease, structure, resolution, tuple(contracts),
                            tuple(volume) if volume is not None else None)
    except ValueError as exc:
        raise SchemaError(str(exc), source=source, field=path or None) from None


def loads_records(text: str, source: str = "<memory>") -> list[MarketRecord]:
    if not text.strip():
        raise SchemaError("empty document", source=source, line=1)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, source=source, line=exc.lineno) from None
    if isinstance(doc, list):
        if not doc:
            raise SchemaError("empty market list", source=source, line=1)
        return [decode_record(d, source, f"[{i}].") for i, d in enumerate(doc)]
    return [decode_record(doc, source)]


def load_fixture(path: str | os.PathLike) -> list[MarketRecord]:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise SchemaError("no *.json market documents", source=str(path))
    elif path.exists():
        files = [path]
    else:
        raise SchemaError("fixture path does not exist", source=str(path))
    records = []
    for f in files:
        records.extend(loads_records(f.read_text(encoding="utf-8"), source=str(f)))
    seen = set()
    for r in records:
        if r.market_id in seen:
            raise SchemaError(f"duplicate market_id {r.market_id!r}", source=str(path))
        seen.add(r.market_id)
    return records


# ------------------------------------------------------------------- HTTP

class Transport(Protocol):
    def __call__(self, url: str, params: Mapping[str, object],
                 headers: Mapping[str, str]) -> tuple[int, str]: ...


def requests_transport(timeout: float = 30.0) -> Transport:
    import requests

    session = requests.Session()

    def get(url, params, headers):
        try:
            resp = session.get(url, params=params, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            raise HttpError(0, str(exc)) from exc
        return resp.status_code, resp.text

    return get


@dataclass
class ApiConfig:
    base_url: str
    auth_header: str | None = None
    token: str | None = None
    path: str = "/prices-history"

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> "ApiConfig":
        env = os.environ if env is None else env
        base = env.get(API_BASE_ENV)
        if not base:
            raise ConfigError(f"set {API_BASE_ENV} to the prediction-market API base URL")
        return cls(base_url=base.rstrip("/"), auth_header=env.get(API_AUTH_HEADER_ENV),
                   token=env.get(API_TOKEN_ENV))

    def headers(self) -> dict[str, str]:
        if self.auth_header and self.token:
            return {self.auth_header: self.token}
        return {}


@dataclass
class PriceHistoryClient:
    """Client for the prices-history endpoint with bounded exponential backoff on 429."""

    config: ApiConfig
    transport: Transport = field(default_factory=requests_transport)
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    sleep: Callable[[float], None] = time.sleep

    def _get(self, params: Mapping[str, object]) -> str:
        url = self.config.base_url + self.config.path
        delay = self.backoff_base
        for attempt in range(1, self.max_attempts + 1):
            status, body = self.transport(url, params, self.config.headers())
            if status == 429:
                if attempt == self.max_attempts:
                    raise RateLimited(status, body)
                log.warning("rate limited on %s (attempt %d); sleeping %.1fs",
                            params.get("market"), attempt, delay)
                self.sleep(delay)
                delay *= self.backoff_factor
                continue
            if not 200 <= status < 300:
                raise HttpError(status, body)
            return body
        raise RateLimited(429, "")

    def fetch_price_history(self, contract_id: str, fidelity_minutes: int = DEFAULT_FIDELITY_MIN,
                            start: int | None = None, end: int | None = None,
                            label: str = "") -> ContractPriceSeries:
        """Price history of one contract, kept to the half-open window ``[start, end)``."""
        if fidelity_minutes < 1:
            raise ValueError("fidelity_minutes must be >= 1")
        if start is not None and end is not None and not start < end:
            raise ValueError("start must precede end")
        params: dict[str, object] = {"market": contract_id, "fidelity": fidelity_minutes}
        if start is not None:
            params["startTs"] = int(start)
        if end is not None:
            params["endTs"] = int(end)
        series = parse_history(self._get(params), contract_id, label, fidelity_minutes)
        lo = start if start is not None else -float("inf")
        hi = end if end is not None else float("inf")
        kept = tuple((t, p) for t, p in series.points if lo <= t < hi)
        return ContractPriceSeries(contract_id, label, kept)


def parse_history(body: str, contract_id: str, label: str = "",
                  fidelity_minutes: int = DEFAULT_FIDELITY_MIN) -> ContractPriceSeries:
    """Decode a ``{"history": [{"t": ..., "p": ...}]}`` payload into a clean series.

    Out-of-range prices are clamped to [0, 1] and logged. Points are sorted and
    thinned to the last observation in each fidelity bucket.
    """
    try:
        doc = json.loads(body)
        history = doc["history"]
        raw = [(int(item["t"]), float(item["p"])) for item in history]
    except (ValueError, KeyError, TypeError) as exc:
        raise DecodeError(f"malformed price history for {contract_id}: {exc}") from exc
    step = fidelity_minutes * 60
    by_bucket: dict[int, tuple[int, float]] = {}
    for t, p in sorted(raw, key=lambda tp: tp[0]):
        if p != p:
            raise DecodeError(f"NaN price for {contract_id} at {t}")
        if not 0.0 <= p <= 1.0:
            clamped = min(max(p, 0.0), 1.0)
            log.warning("clamped price %r -> %r for %s at t=%d", p, clamped, contract_id, t)
            p = clamped
        by_bucket[t - t % step] = (t, p)
    points = tuple(by_bucket[k] for k in sorted(by_bucket))
    return ContractPriceSeries(contract_id, label, points)


# ------------------------------------------------------------------- cache

def cache_path(cache_dir: str | os.PathLike, market_id: str) -> Path:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in market_id)
    return Path(cache_dir) / f"{safe}.json"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class MarketManifest:
    """Everything needed to fetch a market except its prices."""

    market_id: str
    disease: Disease
    structure: Structure
    open_time: datetime
    resolution_time: datetime
    contracts: tuple[tuple[str, str], ...]
    volume: tuple[tuple[int, float], ...] | None = None

    @classmethod
    def from_doc(cls, doc: Mapping, source: str = "<manifest>") -> "MarketManifest":
        try:
            contracts = tuple((c["contract_id"], c["label"]) for c in doc["contracts"])
            return cls(doc["market_id"], Disease(doc["disease"]), Structure(doc["structure"]),
                       parse_time(doc["open_time"]), parse_time(doc["resolution_time"]),
                       contracts, tuple(map(tuple, doc["volume"])) if doc.get("volume") else None)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad manifest entry: {exc}", source=source) from None


def load_manifest(path: str | os.PathLike) -> dict[str, MarketManifest]:
    path = Path(path)
    try:
        docs = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, source=str(path), line=exc.lineno) from None
    if isinstance(docs, Mapping):
        docs = [docs]
    out = {}
    for d in docs:
        m = MarketManifest.from_doc(d, str(path))
        out[m.market_id] = m
    return out


def load_or_fetch(market_id: str, cache_dir: str | os.PathLike, offline: bool,
                  client: PriceHistoryClient | None = None,
                  manifest: Mapping[str, MarketManifest] | None = None,
                  fidelity_minutes: int = DEFAULT_FIDELITY_MIN,
                  max_workers: int = 4) -> MarketRecord:
    """Return the cached record, or fetch every contract and publish it to the cache."""
    path = cache_path(cache_dir, market_id)
    if path.exists():
        records = loads_records(path.read_text(encoding="utf-8"), source=str(path))
        return records[0]
    if offline:
        raise CacheMiss(f"market {market_id!r} not cached in {cache_dir} (offline mode)")
    if client is None or manifest is None or market_id not in manifest:
        raise ConfigError(f"market {market_id!r} needs a manifest entry and an API client to fetch")
    spec = manifest[market_id]
    start = int(spec.open_time.timestamp())
    end = int(spec.resolution_time.timestamp())

    def fetch(contract: tuple[str, str]) -> ContractPriceSeries:
        cid, label = contract
        return client.fetch_price_history(cid, fidelity_minutes, start, end, label=label)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        series = list(pool.map(fetch, spec.contracts))
    record = MarketRecord(spec.market_id, spec.disease, spec.structure, spec.resolution_time,
                          tuple(series), spec.volume)
    write_atomic(path, dumps_record(record))
    return record


def fetch_markets(market_ids: Iterable[str], cache_dir, offline: bool, **kwargs) -> list[MarketRecord]:
    return [load_or_fetch(m, cache_dir, offline, **kwargs) for m in market_ids]
