"""Run configuration (INI ``[run]`` section) and the vector text format."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = ["RunConfig", "read_vectors", "write_vectors", "PROBLEMS", "GRAPHS"]

PROBLEMS = ("toy_single", "toy_pair", "qp", "toy_resource_single", "toy_resource_pair", "resource_qp")
GRAPHS = ("ring", "path", "complete", "star", "generated", "file")
SOLVERS = ("static", "dynamic", "resource")
POLICIES = ("full", "bernoulli")


@dataclass
class RunConfig:
    """All settings of one solver run.

    Optional entries are ``None`` when unset; ``c_i`` holds one value or a
    comma-separated per-agent list.
    """

    solver: str = "static"
    problem: str = "toy_pair"
    N: int = 5
    problem_seed: int = None
    ball: float = None
    graph: str = "ring"
    graph_file: str = None
    lambda2: float = 1.0
    graph_tolerance: float = 0.1
    gamma: float = 1.0
    c_i: str = "1"
    margin: float = 1.0
    p: str = "2"
    B: float = None
    B_d: float = None
    K: int = 1000
    seed: int = 0
    activation_policy: str = "bernoulli"
    activation_prob: float = 0.7
    T_window: int = 3
    diagnostic_shadow: bool = False
    certify: bool = True
    x0: str = None
    slater_point: str = None
    oracle: str = None
    oracle_tol: float = 1e-9
    per_decade: int = 20
    out_dir: str = "out"

    # -- parsing ------------------------------------------------------------

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}

    @classmethod
    def parse_value(cls, key: str, raw: str):
        types = cls.field_types()
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        raw = raw.strip()
        if raw.lower() in ("", "none"):
            return None
        typ = types[key]
        try:
            if typ == "bool":
                low = raw.lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            if typ == "int":
                return int(raw)
            if typ == "float":
                return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None
        return raw

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        cfg = cls()
        return cfg.with_overrides(mapping)

    def with_overrides(self, mapping: dict) -> "RunConfig":
        """Copy with string or typed values applied; ``None`` values are skipped."""
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, v in mapping.items():
            if key not in vals:
                raise ConfigError(f"unknown config key {key!r}")
            if v is None:
                continue
            vals[key] = self.parse_value(key, v) if isinstance(v, str) else v
        out = RunConfig(**vals)
        out.validate()
        return out

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        extra = [s for s in cp.sections() if s != "run"]
        if extra:
            raise ConfigError(f"unknown config sections {extra}")
        if not cp.has_section("run"):
            raise ConfigError("config needs a [run] section")
        return cls.from_mapping(dict(cp["run"]))

    @classmethod
    def read(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_ini(text)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["run"] = {f.name: _fmt(getattr(self, f.name)) for f in fields(self)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.solver in SOLVERS, f"solver must be one of {SOLVERS}")
        need(self.problem in PROBLEMS, f"problem must be one of {PROBLEMS}")
        need(self.graph in GRAPHS, f"graph must be one of {GRAPHS}")
        need(self.activation_policy in POLICIES, f"activation_policy must be one of {POLICIES}")
        need(self.graph != "file" or self.graph_file, "graph = file needs graph_file")
        need(self.K >= 1, "K must be >= 1")
        need(self.N >= 1, "N must be >= 1")
        need(self.gamma > 0, "gamma must be positive")
        need(self.margin > 0, "margin must be positive")
        need(0 <= self.activation_prob <= 1, "activation_prob must lie in [0, 1]")
        need(self.T_window >= 1, "T_window must be >= 1")
        need(self.per_decade >= 1, "per_decade must be >= 1")
        need(self.oracle_tol > 0, "oracle_tol must be positive")
        for name in ("B", "B_d", "ball"):
            v = getattr(self, name)
            need(v is None or v > 0, f"{name} must be positive")
        resource = self.problem.startswith(("toy_resource", "resource"))
        need(resource == (self.solver == "resource"),
             f"problem {self.problem!r} does not fit solver {self.solver!r}")
        c = self.c_values()
        need(bool(np.all(np.atleast_1d(c) > 0)), "c_i must be positive")
        try:
            p = float(self.p_value())
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"p: cannot parse {self.p!r}") from None
        need(p >= 1, "p must be >= 1")

    def c_values(self):
        try:
            vals = [float(v) for v in str(self.c_i).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"c_i: cannot parse {self.c_i!r}") from None
        if not vals:
            raise ConfigError("c_i is empty")
        return vals[0] if len(vals) == 1 else np.array(vals)

    def p_value(self):
        """``p`` as an exact fraction (``"3/2"`` and ``"1.5"`` both allowed)."""
        from fractions import Fraction

        return Fraction(str(self.p).strip())


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_vectors(path) -> list:
    """Read the vector text format: one vector per line, whitespace-separated, ``#`` comments."""
    out = []
    for k, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(np.array([float(t) for t in line.split()]))
        except ValueError:
            raise ConfigError(f"{path}:{k}: not a list of numbers") from None
    return out


def write_vectors(vectors, path) -> None:
    lines = [" ".join(repr(float(v)) for v in np.atleast_1d(x)) for x in vectors]
    Path(path).write_text("\n".join(lines) + "\n")
