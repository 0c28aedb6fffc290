"""Scenario files: sectioned key/value text or JSON.

Example::

    [graph]
    family = path        # complete | path | pcycle
    n = 50
    w = 1

    [platoon]
    g = 0.4
    tau = 0.05
    beta = 4
    d = 2
    c = 1
    epsilon = 0.4
    collided = 1, 25, 49

    [simulation]
    step = 0.00125
    horizon = 200
    replicas = 8
    seed = 1

    [output]
    dir = results
    formats = csv, json
    plots = true

A custom graph uses ``edges = <file>`` in ``[graph]`` instead of ``family``.
Command-line overrides are ``section.key=value`` (or a bare key when it is
unambiguous) and always win over file values.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidParameterError, PlatoonRiskError, ScenarioParseError
from .graph import WeightedGraph, build_family, read_edge_list
from .simulator import SimulationPlan
from .spectral import PlatoonConfig

SCHEMA: dict[str, dict[str, type]] = {
    "graph": {"family": str, "n": int, "p": int, "w": float, "edges": str},
    "platoon": {
        "g": float, "tau": float, "beta": float, "d": float, "c": float,
        "epsilon": float, "collided": list, "d_c": float,
    },
    "simulation": {
        "step": float, "horizon": float, "replicas": int, "seed": int,
        "sample_stride": int, "burn_in": float, "eta": float,
    },
    "output": {"dir": str, "formats": list, "plots": bool},
}

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(section: str, key: str, raw, line: int | None = None):
    kind = SCHEMA[section][key]
    try:
        if kind is list:
            if isinstance(raw, (list, tuple)):
                return [str(x).strip() for x in raw]
            return [part.strip() for part in str(raw).split(",") if part.strip()]
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            return _BOOL[str(raw).strip().lower()]
        if kind is int:
            if isinstance(raw, float) and raw.is_integer():
                return int(raw)
            return int(str(raw).strip())
        if kind is float:
            return float(str(raw).strip()) if not isinstance(raw, (int, float)) else float(raw)
        return str(raw).strip()
    except (ValueError, KeyError):
        raise ScenarioParseError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}", line) from None


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, "")] = lineno
            continue
        m = re.match(r"([A-Za-z_][\w]*)\s*[=:]", stripped)
        if m and section:
            lines[(section, m.group(1).lower())] = lineno
    return lines


def _parse_ini(text: str, source: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ScenarioParseError(f"{source}: {exc.message.splitlines()[0] if hasattr(exc, 'message') else exc}", line) from None
    lines = _key_lines(text)
    data: dict[str, dict] = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            raise ScenarioParseError(f"unknown section [{section}]", lines.get((sec, ""), None))
        data[sec] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[sec]:
                raise ScenarioParseError(f"unknown key {key!r} in [{section}]", lines.get((sec, key)))
            data[sec][key] = _coerce(sec, key, raw, lines.get((sec, key)))
    return data


def _parse_json(text: str, source: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{source}: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict):
        raise ScenarioParseError(f"{source}: top level must be an object")
    data = {}
    for sec, values in raw.items():
        if sec not in SCHEMA or not isinstance(values, dict):
            raise ScenarioParseError(f"{source}: unknown or malformed section {sec!r}")
        data[sec] = {}
        for key, value in values.items():
            if key not in SCHEMA[sec]:
                raise ScenarioParseError(f"{source}: unknown key {key!r} in {sec!r}")
            data[sec][key] = _coerce(sec, key, value)
    return data


def apply_overrides(data: dict, overrides: list[str] | None) -> dict:
    data = {sec: dict(values) for sec, values in data.items()}
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ScenarioParseError(f"override {item!r} is not key=value")
        key = key.strip().lower()
        if "." in key:
            sec, key = key.split(".", 1)
        else:
            owners = [s for s, keys in SCHEMA.items() if key in keys]
            if len(owners) != 1:
                raise ScenarioParseError(f"override key {key!r} is unknown or ambiguous; use section.key")
            sec = owners[0]
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ScenarioParseError(f"unknown override key {sec}.{key}")
        data.setdefault(sec, {})[key] = _coerce(sec, key, value)
    return data


@dataclass
class SimulationSpec:
    step: float
    horizon: float
    replicas: int = 1
    seed: int = 0
    sample_stride: int = 1
    burn_in: float | None = None
    eta: float = 0.05  # slab half-width in units of sigma_i


@dataclass
class Scenario:
    """Validated scenario; exactly one graph source."""

    graph: WeightedGraph
    graph_label: str
    config: PlatoonConfig
    collided: list[int] = field(default_factory=list)
    d_c: float = 0.0
    simulation: SimulationSpec | None = None
    out_dir: Path = Path("results")
    formats: tuple[str, ...] = ("csv", "json")
    plots: bool = False
    raw: dict = field(default_factory=dict)

    def plan(self, seed: int | None = None, config: PlatoonConfig | None = None) -> SimulationPlan:
        if self.simulation is None:
            raise InvalidParameterError("scenario has no [simulation] section")
        sim = self.simulation
        return SimulationPlan(
            cfg=config or self.config,
            graph=self.graph,
            step=sim.step,
            horizon=sim.horizon,
            replicas=sim.replicas,
            seed=sim.seed if seed is None else seed,
            sample_stride=sim.sample_stride,
            burn_in=sim.burn_in,
        )


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    base_dir = base_dir or Path(".")
    graph_sec = data.get("graph", {})
    if ("family" in graph_sec) == ("edges" in graph_sec):
        raise ScenarioParseError("[graph] needs exactly one of 'family' or 'edges'")
    try:
        if "edges" in graph_sec:
            path = Path(graph_sec["edges"])
            if not path.is_absolute():
                path = base_dir / path
            graph = read_edge_list(path)
            label = f"edges:{path.name}"
        else:
            family = graph_sec["family"]
            if "n" not in graph_sec:
                raise ScenarioParseError("[graph] family needs n")
            graph = build_family(family, graph_sec["n"], graph_sec.get("p"), graph_sec.get("w", 1.0))
            label = family if family != "pcycle" else f"pcycle_p{graph_sec.get('p')}"

        plat = data.get("platoon", {})
        missing = [k for k in ("g", "tau", "beta") if k not in plat]
        if missing:
            raise ScenarioParseError(f"[platoon] is missing {', '.join(missing)}")
        cfg = PlatoonConfig(
            n=graph.n, g=plat["g"], tau=plat["tau"], beta=plat["beta"],
            d=plat.get("d", 2.0), c=plat.get("c", 1.0), epsilon=plat.get("epsilon", 0.1),
        )
        collided = [int(x) for x in plat.get("collided", [])]
        for i in collided:
            if not 1 <= i <= graph.n - 1:
                raise InvalidParameterError(f"collided pair {i} outside 1..{graph.n - 1}")

        sim = None
        if "simulation" in data:
            s = data["simulation"]
            if "step" not in s or "horizon" not in s:
                raise ScenarioParseError("[simulation] needs step and horizon")
            sim = SimulationSpec(**s)

        out = data.get("output", {})
        formats = tuple(f.lower() for f in out.get("formats", ["csv", "json"]))
        bad = set(formats) - {"csv", "json"}
        if bad:
            raise ScenarioParseError(f"unknown output formats {sorted(bad)}")
    except ScenarioParseError:
        raise
    except (PlatoonRiskError, KeyError, TypeError) as exc:
        raise ScenarioParseError(str(exc)) from None
    return Scenario(
        graph=graph, graph_label=label, config=cfg, collided=collided, d_c=plat.get("d_c", 0.0),
        simulation=sim, out_dir=Path(out.get("dir", "results")), formats=formats,
        plots=bool(out.get("plots", False)), raw=data,
    )


def load_scenario(path: str | Path, overrides: list[str] | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".json":
        data = _parse_json(text, str(path))
    else:
        data = _parse_ini(text, str(path))
    return scenario_from_dict(apply_overrides(data, overrides), base_dir=path.parent)


# Case-study parameter sets; pcycle runs once per listed p.
CASE_STUDIES: dict[str, dict] = {
    "complete": {
        "graph": {"family": "complete", "n": 50, "w": 1.0},
        "platoon": {"g": 10.0, "tau": 0.02, "beta": 1.0, "c": 1.0, "d": 2.0, "epsilon": 0.1, "collided": ["25"]},
    },
    "path": {
        "graph": {"family": "path", "n": 50, "w": 1.0},
        "platoon": {"g": 0.4, "tau": 0.05, "beta": 4.0, "c": 1.0, "d": 2.0, "epsilon": 0.4,
                    "collided": ["1", "25", "49"]},
    },
    "pcycle": {
        "graph": {"family": "pcycle", "n": 50, "w": 1.0},
        "platoon": {"g": 0.1, "tau": 0.01, "beta": 2.0, "c": 1.0, "d": 2.0, "epsilon": 0.1, "collided": ["25"]},
    },
}
PCYCLE_ORDERS = (5, 10)


def case_study_scenarios(name: str, overrides: list[str] | None = None, out_dir: Path | None = None) -> list[Scenario]:
    if name not in CASE_STUDIES:
        raise ScenarioParseError(f"unknown case study {name!r}; choose from {sorted(CASE_STUDIES)}")
    bases = []
    if name == "pcycle":
        for p in PCYCLE_ORDERS:
            base = json.loads(json.dumps(CASE_STUDIES[name]))
            base["graph"]["p"] = p
            bases.append(base)
    else:
        bases.append(json.loads(json.dumps(CASE_STUDIES[name])))
    scenarios = []
    for base in bases:
        data = {sec: {k: _coerce(sec, k, v) for k, v in vals.items()} for sec, vals in base.items()}
        data = apply_overrides(data, overrides)
        sc = scenario_from_dict(data)
        root = out_dir or sc.out_dir
        sc.out_dir = Path(root) / sc.graph_label if name == "pcycle" else Path(root)
        scenarios.append(sc)
    return scenarios
