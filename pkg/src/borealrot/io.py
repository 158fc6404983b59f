"""File formats: JSON inputs with schema checks, CSV/JSON outputs.

Every JSON document carries ``schema_version`` and ``kind``.  Outputs are
written atomically (temporary file in the target directory, then rename)
and numbers are formatted with ``repr`` so they are locale independent and
round-trip exactly.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import jsonschema

from .errors import PreconditionError, SchemaError
from .growth import N_CLASSES, SPECIES, GrowthParams, SiteDescriptor, StandState
from .economics import EconomicConfig, Ledger
from .schedule import Schedule

SCHEMA_VERSION = 1

_number = {"type": "number"}
_vec = lambda n: {"type": "array", "items": _number, "minItems": n, "maxItems": n}  # noqa: E731


def _doc(kind: str, properties: Dict[str, Any], required: Sequence[str]) -> Dict[str, Any]:
    props = {"schema_version": {"const": SCHEMA_VERSION}, "kind": {"const": kind}}
    props.update(properties)
    return {"type": "object", "properties": props,
            "required": ["schema_version", "kind", *required]}


_species_block = {
    "type": "object",
    "properties": {
        "increment": _vec(5), "survival": _vec(5), "ingrowth": _vec(3),
        "volume": _vec(2), "sawlog_max": _number,
    },
    "required": ["increment", "survival", "ingrowth", "volume", "sawlog_max"],
}

GROWTH_SCHEMA = _doc("growth_params", {
    "step_months": {"const": 30},
    "fertilization": {"type": "object", "properties": {
        "site_index_bump": _number, "duration_years": _number}},
    "sawlog_ramp": _vec(2),
    "notes": {"type": "object"},
    "species": {"type": "object",
                "properties": {sp: _species_block for sp in SPECIES},
                "required": list(SPECIES), "additionalProperties": False},
}, ["species"])

_price_row = {"type": "object", "properties": {"sawlog": _number, "pulp": _number},
              "required": ["sawlog", "pulp"], "additionalProperties": False}
_price_table = {"type": "object", "properties": {sp: _price_row for sp in SPECIES},
                "required": list(SPECIES), "additionalProperties": False}

ECON_SCHEMA = _doc("econ_config", {
    "price_level": {"type": "string"},
    "prices": {"type": "object",
               "properties": {"thinning": _price_table, "clearcut": _price_table},
               "required": ["thinning", "clearcut"], "additionalProperties": False},
    "regeneration_cost": _number, "fertilization_cost": _number,
    "bare_land_value": _number, "interest_rate": _number, "operating_cost": _number,
    "carbon": {"type": "object", "properties": {"stem": _number, "total": _number}},
}, ["prices", "regeneration_cost", "fertilization_cost", "bare_land_value"])

STAND_SCHEMA = _doc("stand", {
    "id": {"type": "string"},
    "age": _number,
    "site": {"type": "object", "properties": {
        "site_index": _number, "site_class": {"type": "string"}, "soil": {"type": "string"}},
        "required": ["site_index"]},
    "fert_remaining": _number,
    "stems": {"type": "object",
              "properties": {sp: _vec(N_CLASSES) for sp in SPECIES},
              "additionalProperties": False},
    "provenance": {"type": "string"},
}, ["id", "age", "site", "stems"])

_thinning = {"type": "object", "properties": {
    "time": _number, "gamma": _number,
    "q": {"type": "object", "additionalProperties": _number},
    "fractions": {"type": "object", "additionalProperties": _vec(N_CLASSES)}},
    "required": ["time"]}

SCHEDULE_SCHEMA = _doc("schedule", {
    "rotation": _number,
    "thinnings": {"type": "array", "items": _thinning},
    "fertilizations": {"type": "array", "items": _number},
}, ["rotation"])

MANIFEST_SCHEMA = _doc("manifest", {
    "stands": {"type": "array", "items": {"type": "string"}},
    "generate": {"type": "object", "properties": {"count": {"type": "integer", "minimum": 1}},
                 "required": ["count"]},
    "growth_params": {"type": "string"},
    "econ_config": {"type": "string"},
    "scenarios": {"type": "array", "items": {"type": "string"}},
    "out_dir": {"type": "string"},
    "seed": {"type": "integer"},
    "optimizer": {"type": "object", "additionalProperties": False, "properties": {
        "max_rotation": _number,
        "q_step": {"type": "number", "exclusiveMinimum": 0},
        "q_max": _number,
        "gammas": {"type": "array", "items": _number, "minItems": 1},
        "thinning_times": {"type": "array", "items": _number},
        "intensities": {"type": "array", "items": _number, "minItems": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "max_thinnings": {"type": "integer", "minimum": 0},
        "species_allocation": {"enum": ["independent", "uniform"]},
    }},
}, [])


def default_data_path(name: str) -> Path:
    return Path(str(resources.files("borealrot") / "data" / name))


def read_json(path, schema: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Parse ``path`` and validate it; failures raise ``SchemaError``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if schema is not None:
        try:
            jsonschema.validate(data, schema)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            line = _line_of(text, exc.absolute_path)
            raise SchemaError(f"{path}:{line}: at {where}: {exc.message}") from None
    return data


def _line_of(text: str, json_path) -> int:
    """Best-effort line number of the last key in ``json_path``."""
    keys = [p for p in json_path if isinstance(p, str)]
    if not keys:
        return 1
    needle = json.dumps(keys[-1])
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return 1


def _domain(path, build):
    try:
        return build()
    except PreconditionError as exc:
        raise PreconditionError(f"{path}: {exc}") from None


def load_growth_params(path) -> GrowthParams:
    data = read_json(path, GROWTH_SCHEMA)
    return _domain(path, lambda: GrowthParams.from_dict(data))


def load_econ_config(path) -> EconomicConfig:
    data = read_json(path, ECON_SCHEMA)
    return _domain(path, lambda: EconomicConfig.from_dict(data))


@dataclass(frozen=True, eq=False)
class StandFile:
    stand_id: str
    state: StandState
    provenance: str = ""


def stand_from_dict(data: Mapping[str, Any]) -> StandFile:
    site = data["site"]
    state = StandState.from_distributions(
        data["age"], data["stems"],
        SiteDescriptor(float(site["site_index"]), site.get("site_class", "mesic"),
                       site.get("soil", "mineral")),
        float(data.get("fert_remaining", 0.0)))
    return StandFile(data["id"], state, data.get("provenance", ""))


def stand_to_dict(stand: StandFile) -> Dict[str, Any]:
    st = stand.state
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "stand",
        "id": stand.stand_id,
        "age": st.age,
        "site": {"site_index": st.site.site_index, "site_class": st.site.site_class,
                 "soil": st.site.soil},
        "fert_remaining": st.fert_remaining,
        "stems": {sp: [float(v) for v in st.stems[i]] for i, sp in enumerate(SPECIES)},
        "provenance": stand.provenance,
    }


def load_stand(path) -> StandFile:
    data = read_json(path, STAND_SCHEMA)
    return _domain(path, lambda: stand_from_dict(data))


def bundled_stands() -> List[StandFile]:
    """The synthetic stands shipped with the package, sorted by id."""
    folder = default_data_path("stands")
    return sorted((load_stand(p) for p in folder.glob("*.json")), key=lambda s: s.stand_id)


def load_schedule(path) -> Schedule:
    data = read_json(path, SCHEDULE_SCHEMA)
    return _domain(path, lambda: Schedule.from_dict(data))


def load_manifest(path) -> Dict[str, Any]:
    """Read a run manifest; relative paths are taken from the manifest's folder."""
    path = Path(path)
    data = read_json(path, MANIFEST_SCHEMA)
    base = path.resolve().parent
    out = dict(data)
    out["stands"] = [str(base / p) for p in data.get("stands", [])]
    for key in ("growth_params", "econ_config", "out_dir"):
        if key in data:
            out[key] = str(base / data[key])
    return out


def json_safe(data: Any) -> Any:
    """Replace non-finite floats by ``None`` (JSON has no NaN)."""
    if isinstance(data, float):
        return data if math.isfinite(data) else None
    if isinstance(data, dict):
        return {k: json_safe(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [json_safe(v) for v in data]
    return data


def dumps_json(data: Any) -> str:
    return json.dumps(json_safe(data), indent=2, sort_keys=False, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data: Any) -> None:
    atomic_write_text(path, dumps_json(data))


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value != value:
            return ""
        return repr(value)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    atomic_write_text(path, csv_text(header, rows))


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


LEDGER_HEADER = ("t", "K_left", "K_right", "profit_rate_left", "profit_rate_right",
                 "volume_left", "volume_right", "events", "event_amounts")


def ledger_rows(ledger: Ledger) -> List[List[Any]]:
    """One row per ledger node with left/right limits and the events there."""
    t = ledger.times
    n = len(t)
    rows = []
    for i in range(n):
        evs = [e for e in ledger.events if abs(e.time - t[i]) < 1e-9]
        rows.append([
            float(t[i]),
            float(ledger.capital_end[i - 1]) if i > 0 else None,
            float(ledger.capital_start[i]) if i < n - 1 else None,
            float(ledger.profit_end[i - 1]) if i > 0 else None,
            float(ledger.profit_start[i]) if i < n - 1 else None,
            float(ledger.volume_end[i - 1]) if i > 0 else None,
            float(ledger.volume_start[i]) if i < n - 1 else None,
            ";".join(f"{e.kind}:{e.category}" for e in evs),
            ";".join(repr(float(e.amount)) for e in evs),
        ])
    return rows


def write_ledger_csv(path, ledger: Ledger) -> None:
    write_csv(path, LEDGER_HEADER, ledger_rows(ledger))
