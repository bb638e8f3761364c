"""Sectioned key-value configuration (INI syntax) for all physical constants."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from co2net.digester import DigesterParams, Equilibrium
from co2net.errors import ConfigError
from co2net.microalgae import MonodParams

# Reference translated initial conditions of the digester.
PRESETS = {
    1: np.array([-1.0, 0.5, 1.0, 1.5, 0.8, -0.5]),
    2: np.array([-1.5, 1.25, 0.4, 1.8, -1.8, -2.2]),
}

_SCHEMA = {
    "notes": None,
    "digester": {**{f.name: float for f in fields(DigesterParams)}, "x_ss": "vec", "u_ss": "vec"},
    "controller": {"t_max": float, "preset": int, "method": str},
    "microalgae": {**{f.name: float for f in fields(MonodParams)},
                   "i_ref": float, "x_alg_0": float, "s_0": float},
    "network": {"vd": float, "vm": float, "delta": float, "t_end": float},
    "integrator": {"dt": float, "t_end": float, "stride": int, "abs_tol": float, "rel_tol": float,
                   "oracle_rtol": float, "calib_dt0": float, "calib_rel_tol": float},
    "env": {"max_episode_steps": int, "env_dt": float, "substep_dt": float,
            "init_low": float, "init_high": float, "action_low": float, "action_high": float},
    "ars": {"n_directions": int, "learning_rate": float, "noise": float, "episodes_per_candidate": int,
            "top_directions": int, "alive_bonus_offset": float, "total_steps": int,
            "normalize": "bool", "eval_episodes": int},
}

_REQUIRED = {"digester", "microalgae"}


def _parse_value(kind, raw, where):
    try:
        if kind == "vec":
            return np.array([float(v) for v in raw.replace(",", " ").split()])
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {where} = {raw!r}") from exc


@dataclass
class Config:
    sections: dict = field(default_factory=dict)
    source: str = "<memory>"

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def digester_params(self) -> DigesterParams:
        d = self.section("digester")
        return DigesterParams(**{f.name: d[f.name] for f in fields(DigesterParams)})

    def equilibrium(self) -> Equilibrium:
        d = self.section("digester")
        return Equilibrium(d["x_ss"], d["u_ss"])

    def monod_params(self) -> MonodParams:
        d = self.section("microalgae")
        return MonodParams(**{f.name: d[f.name] for f in fields(MonodParams)})

    def with_overrides(self, overrides) -> "Config":
        """Apply ``section.key=value`` strings."""
        text = self.dumps()
        cp = _parser()
        cp.read_string(text)
        for item in overrides or ():
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            lhs, value = item.split("=", 1)
            sec, key = lhs.strip().split(".", 1)
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, key, value.strip())
        return _from_parser(cp, self.source)

    def dumps(self) -> str:
        lines = []
        for sec, values in self.sections.items():
            lines.append(f"[{sec}]")
            for k, v in values.items():
                if isinstance(v, np.ndarray):
                    v = ", ".join(repr(float(x)) for x in v)
                elif isinstance(v, bool):
                    v = str(v).lower()
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def _from_parser(cp, source) -> Config:
    sections = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}] in {source}")
        schema = _SCHEMA[sec]
        values = {}
        for key, raw in cp.items(sec):
            if schema is None:
                values[key] = raw
                continue
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{sec}] of {source}")
            values[key] = _parse_value(schema[key], raw, f"{sec}.{key}")
        sections[sec] = values
    missing = _REQUIRED - set(sections)
    if missing:
        raise ConfigError(f"missing section(s) {sorted(missing)} in {source}")
    cfg = Config(sections, source)
    # construct once so bad values fail at load time
    cfg.equilibrium().check(cfg.digester_params())
    cfg.monod_params()
    return cfg


def loads(text: str, source="<string>") -> Config:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration {source}: {exc}") from exc
    try:
        return _from_parser(cp, source)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc} in {source}") from exc


def load(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    return loads(path.read_text(), str(path))


def reference_text() -> str:
    return resources.files("co2net").joinpath("data/reference.ini").read_text()


def reference() -> Config:
    return loads(reference_text(), "reference.ini")
