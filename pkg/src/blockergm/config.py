"""Flat ``key = value`` configuration files.

Grammar: one ``key = value`` pair per line, ``#`` starts a comment, keys are
dotted lowercase identifiers, values are scalars or comma-separated lists.
Unknown keys are rejected up front so typos fail fast.
"""
from __future__ import annotations

from .errors import ConfigError

KNOWN_KEYS = {
    "model.terms", "model.gwd_trunc", "model.gwesp_trunc",
    "step1.k", "step1.gamma", "step1.max_iters", "step1.restarts",
    "step1.qp_tol", "step1.mode", "step1.init",
    "step2.samples", "step2.burnin", "step2.interval", "step2.max_outer",
    "step2.trust_radius", "step2.tol", "step2.theta0",
    "sim.n", "sim.sizes", "sim.pi", "sim.theta", "sim.burnin", "sim.interval",
    "gof.samples", "gof.theta", "gof.geo_cap", "gof.sp_cap",
    "seed", "workers",
}


class Config:
    def __init__(self, data: dict):
        self.data = dict(data)

    @classmethod
    def from_text(cls, text: str) -> "Config":
        data = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip().lower()
            if key not in KNOWN_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            data[key] = value.strip()
        return cls(data)

    @classmethod
    def from_file(cls, path) -> "Config":
        try:
            with open(path, "r", encoding="ascii") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def has(self, key: str) -> bool:
        return key in self.data

    def get_str(self, key: str, default=None) -> str:
        if key not in self.data:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        return self.data[key]

    def get_int(self, key: str, default=None) -> int:
        raw = self.get_str(key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected integer, got {raw!r}") from None

    def get_float(self, key: str, default=None) -> float:
        raw = self.get_str(key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected number, got {raw!r}") from None

    def get_float_list(self, key: str, default=None):
        raw = self.get_str(key, default)
        try:
            return [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"key {key!r}: expected numbers, got {raw!r}") from None

    def get_str_list(self, key: str, default=None):
        raw = self.get_str(key, default)
        return [v.strip() for v in raw.split(",") if v.strip()]

    def echo(self) -> dict:
        return dict(sorted(self.data.items()))
