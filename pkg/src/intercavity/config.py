"""INI-style run configuration.

Every key has a built-in default, so a minimal file only lists sweep axes::

    [sweep]
    b = 7:15:0.5
    g12_fraction = 0, 0.2, 0.4

Grids are either comma-separated values or ``start:stop:step`` (inclusive).
Lifetimes are inverse rates in microseconds; ``inf`` disables a channel.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .model import DissipationRates, SystemParams, derive_params
from .protocol import IntegratorSettings, Model


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Lifetimes:
    t1_us: float = 10.0
    t21_us: float = 7.5
    t20_us: float = 30.0
    tphi1_us: float = 2.5
    tphi2_us: float = 2.5
    kappa1_inv_us: float = 5.0
    kappa2_inv_us: float = 5.0

    def rates(self) -> DissipationRates:
        return DissipationRates.from_lifetimes_us(**{f.name: getattr(self, f.name)
                                                     for f in fields(self)})


@dataclass(frozen=True)
class BaseConfig:
    """Inputs to :func:`derive_params` plus lifetimes."""

    b: float = 11.0
    delta1_ghz: float = -0.5
    delta2_ghz: float = -1.0
    omega10_ghz: float = 6.5
    anharmonicity_fraction: float = 0.05
    g12_fraction: float = 0.2
    lifetimes: Lifetimes = field(default_factory=Lifetimes)

    def params(self, b: float | None = None, g12_fraction: float | None = None) -> SystemParams:
        return derive_params(self.b if b is None else b, self.delta1_ghz, self.delta2_ghz,
                             self.omega10_ghz, self.anharmonicity_fraction,
                             self.g12_fraction if g12_fraction is None else g12_fraction,
                             self.lifetimes.rates())


@dataclass(frozen=True)
class RunConfig:
    base: BaseConfig = field(default_factory=BaseConfig)
    kind: str = "entanglement"
    model: Model = Model.FULL_LINDBLAD
    alpha: float = 1.0
    b_grid: tuple[float, ...] = ()
    g12_grid: tuple[float, ...] = ()
    alpha_grid: tuple[float, ...] = ()
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    override_regime: bool = False

    def __post_init__(self):
        if self.kind not in ("entanglement", "transfer"):
            raise ConfigError(f"unknown protocol kind {self.kind!r}")
        object.__setattr__(self, "model", Model(self.model))
        if abs(self.alpha) > 1:
            raise ConfigError(f"alpha must lie in [-1, 1], got {self.alpha}")
        for name in ("b_grid", "g12_grid", "alpha_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if any(abs(a) > 1 for a in self.alpha_grid):
            raise ConfigError("alpha grid values must lie in [-1, 1]")

    def with_overrides(self, **changes) -> RunConfig:
        settings_keys = {f.name for f in fields(IntegratorSettings)}
        settings = {k: v for k, v in changes.items() if k in settings_keys and v is not None}
        rest = {k: v for k, v in changes.items() if k not in settings_keys and v is not None}
        cfg = replace(self, **rest) if rest else self
        if settings:
            cfg = replace(cfg, settings=replace(cfg.settings, **settings))
        return cfg

    def to_ini(self) -> str:
        """Canonical text of the effective configuration (stable key order)."""
        b, lt, s = self.base, self.base.lifetimes, self.settings
        lines = ["[system]"]
        lines += [f"{k} = {_fmt(getattr(b, k))}" for k in
                  ("b", "delta1_ghz", "delta2_ghz", "omega10_ghz",
                   "anharmonicity_fraction", "g12_fraction")]
        lines += ["", "[rates]"]
        lines += [f"{f.name} = {_fmt(getattr(lt, f.name))}" for f in fields(lt)]
        lines += ["", "[protocol]", f"kind = {self.kind}", f"model = {self.model.value}",
                  f"alpha = {_fmt(self.alpha)}"]
        lines += ["", "[sweep]",
                  f"b = {_fmt_grid(self.b_grid)}",
                  f"g12_fraction = {_fmt_grid(self.g12_grid)}",
                  f"alpha = {_fmt_grid(self.alpha_grid)}"]
        lines += ["", "[integrator]", f"dt_ps = {_fmt(s.dt * 1e3)}",
                  f"sample_every = {s.sample_every}", f"truncation = {s.truncation}",
                  f"regime_threshold = {_fmt(s.regime_threshold)}",
                  f"override_regime_check = {'true' if self.override_regime else 'false'}"]
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def _fmt_grid(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def parse_grid(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if not step > 0 or stop < start:
            raise ConfigError(f"bad range grid {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(np.round(start + k * step, 12)) for k in range(n))
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


_SYSTEM_KEYS = ("b", "delta1_ghz", "delta2_ghz", "omega10_ghz",
                "anharmonicity_fraction", "g12_fraction")
_SECTIONS = {
    "system": set(_SYSTEM_KEYS),
    "rates": {f.name for f in fields(Lifetimes)},
    "protocol": {"kind", "model", "alpha"},
    "sweep": {"b", "g12_fraction", "alpha"},
    "integrator": {"dt_ps", "sample_every", "truncation", "regime_threshold",
                   "override_regime_check"},
}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(parser[section]) - _SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    def get(section, key, conv, default):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
        return default

    d_base, d_lt, d_set = BaseConfig(), Lifetimes(), IntegratorSettings()
    lifetimes = Lifetimes(**{f.name: get("rates", f.name, float, getattr(d_lt, f.name))
                             for f in fields(Lifetimes)})
    base = BaseConfig(**{k: get("system", k, float, getattr(d_base, k)) for k in _SYSTEM_KEYS},
                      lifetimes=lifetimes)
    try:
        settings = IntegratorSettings(
            dt=get("integrator", "dt_ps", float, d_set.dt * 1e3) * 1e-3,
            sample_every=get("integrator", "sample_every", int, d_set.sample_every),
            truncation=get("integrator", "truncation", int, d_set.truncation),
            regime_threshold=get("integrator", "regime_threshold", float,
                                 d_set.regime_threshold),
        )
        return RunConfig(
            base=base,
            kind=get("protocol", "kind", str.strip, "entanglement"),
            model=get("protocol", "model", str.strip, Model.FULL_LINDBLAD.value),
            alpha=get("protocol", "alpha", float, 1.0),
            b_grid=get("sweep", "b", parse_grid, ()),
            g12_grid=get("sweep", "g12_fraction", parse_grid, ()),
            alpha_grid=get("sweep", "alpha", parse_grid, ()),
            settings=settings,
            override_regime=get("integrator", "override_regime_check", _parse_bool, False),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
