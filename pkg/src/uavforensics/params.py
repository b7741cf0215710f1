"""Parameter findings: failsafe posture and safety-relevant configuration.

Rules live in a JSON catalog so investigators can extend them for other
firmware versions without touching code.
"""

from __future__ import annotations

import json
import math
import operator
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Any, Optional, Union

from .ulog import ParameterSet
from .ulog.model import ParamValue

DEFAULT_CATALOG_NAME = "px4-default.json"


class Severity(str, Enum):
    CRITICAL = "critical"
    NOTABLE = "notable"
    INFO = "info"


SEVERITY_ORDER = {Severity.CRITICAL: 0, Severity.NOTABLE: 1, Severity.INFO: 2}

_OPS = {
    "eq": operator.eq,
    "ne": operator.ne,
    "lt": operator.lt,
    "le": operator.le,
    "gt": operator.gt,
    "ge": operator.ge,
    "in": lambda a, b: a in b,
    "present": lambda a, b: True,
}


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    code: str
    parameter: str
    op: str
    severity: Severity
    meaning: str
    value: Any = None
    labels: Optional[dict[str, str]] = None

    def matches(self, observed: ParamValue) -> bool:
        expected = self.value
        if self.op in ("eq", "ne") and isinstance(observed, float) and isinstance(expected, (int, float)):
            hit = math.isclose(observed, expected, rel_tol=1e-6, abs_tol=1e-9)
            return hit if self.op == "eq" else not hit
        return bool(_OPS[self.op](observed, expected))

    def describe(self, observed: ParamValue) -> str:
        label = str(observed)
        if self.labels:
            key = str(int(observed)) if float(observed).is_integer() else str(observed)
            label = self.labels.get(key, f"value {observed}")
        return self.meaning.format(value=_fmt(observed), label=label)


def _fmt(v: ParamValue) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


@dataclass(frozen=True)
class FindingCatalog:
    rules: tuple[Rule, ...]
    name: str = "custom"
    version: int = 1

    def __post_init__(self):
        codes = [r.code for r in self.rules]
        if len(set(codes)) != len(codes):
            raise CatalogError("rule codes must be unique")


@dataclass(frozen=True)
class Finding:
    code: str
    severity: Severity
    parameter: str
    observed: ParamValue
    meaning: str

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity.value,
            "parameter": self.parameter,
            "observed": self.observed,
            "meaning": self.meaning,
        }


def parse_catalog(data: Union[bytes, str]) -> FindingCatalog:
    try:
        doc = json.loads(data)
        label_sets = doc.get("label_sets", {})
        rules = []
        for r in doc["rules"]:
            op = r.get("op", "eq")
            if op not in _OPS:
                raise CatalogError(f"rule {r.get('code')}: unknown op {op!r}")
            if not r.get("meaning"):
                raise CatalogError(f"rule {r.get('code')}: empty meaning")
            if not isinstance(r.get("parameter"), str) or not r["parameter"]:
                raise CatalogError(f"rule {r.get('code')}: must name exactly one parameter")
            if r.get("severity") not in {s.value for s in Severity}:
                raise CatalogError(f"rule {r.get('code')}: unknown severity {r.get('severity')!r}")
            labels = r.get("labels")
            if isinstance(labels, str):
                if labels not in label_sets:
                    raise CatalogError(f"rule {r['code']}: unknown label set {labels!r}")
                labels = label_sets[labels]
            rules.append(
                Rule(
                    code=r["code"],
                    parameter=r["parameter"],
                    op=op,
                    severity=Severity(r["severity"]),
                    meaning=r["meaning"],
                    value=r.get("value"),
                    labels=labels,
                )
            )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CatalogError(f"malformed catalog: {exc}") from exc
    return FindingCatalog(tuple(rules), doc.get("catalog", "custom"), doc.get("version", 1))


def default_catalog_bytes() -> bytes:
    return resources.files("uavforensics.data").joinpath(DEFAULT_CATALOG_NAME).read_bytes()


def default_catalog() -> FindingCatalog:
    return parse_catalog(default_catalog_bytes())


def analyze_parameters(params: ParameterSet, catalog: Optional[FindingCatalog] = None) -> list[Finding]:
    """One finding per matching rule, ordered by severity then code."""
    catalog = catalog or default_catalog()
    entries = params.entries()
    findings = []
    for rule in catalog.rules:
        entry = entries.get(rule.parameter)
        if entry is None:
            continue
        try:
            hit = rule.matches(entry.value)
        except TypeError:
            continue
        if hit:
            findings.append(Finding(rule.code, rule.severity, rule.parameter, entry.value, rule.describe(entry.value)))
    findings.sort(key=lambda f: (SEVERITY_ORDER[f.severity], f.code))
    return findings


def cruise_speed(params: ParameterSet) -> Optional[float]:
    """Mission cruise speed (MPC_XY_CRUISE) in m/s, or None when not set."""
    v = params.get("MPC_XY_CRUISE")
    return None if v is None else float(v)


# QGroundControl parameter dumps: "vehicle<TAB>component<TAB>name<TAB>value<TAB>type"
_MAV_PARAM_INT_TYPES = {1, 2, 3, 4, 5, 6, 7, 8}


def parse_parameter_dump(data: bytes) -> ParameterSet:
    """Read a ground-station parameter export (``.params`` text)."""
    values: dict[str, ParamValue] = {}
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) == 5:
            _, _, name, value, mtype = parts
            is_int = int(mtype) in _MAV_PARAM_INT_TYPES
        elif len(parts) in (2, 3) or "," in line:
            parts = line.replace(",", " ").split()
            name, value = parts[0], parts[1]
            is_int = "." not in value and "e" not in value.lower()
        else:
            raise ValueError(f"line {lineno}: unrecognized parameter line {line!r}")
        values[name] = int(float(value)) if is_int else float(value)
    return ParameterSet.from_values(values)
