"""Experiment files: JSON describing one evolution run.

{
  "name": "block4_swap",
  "d": 4,
  "hamiltonian": [[1, 1, 0, 0], ...]          or  "displacement": {"d": 3, "op": "X"}
  "zeros": [[1.0, -1.99], ...]                or  "state": [[re, im], ...]
  "t_end": 12.566                             or  "periods": 2
  "samples_per_unit": 200,                    (displacement runs)
  "tracker": {"dt": 0.001, "polish_every": 1, ...},
  "root": {"grid_n": 64},
  "verify": "real-shift"
}
"""
import json
import logging
from dataclasses import dataclass, field, fields

from analytic_rep import QuantumState, pair_to_complex
from errors import ConfigError, DomainError
from evolution import Hamiltonian, TrackerConfig, detect_period
from phase_space import operator_from_spec
from zeros import RootFindConfig

logger = logging.getLogger(__name__)

VERIFICATIONS = ("real-shift", "shifted-copies", "invariants")


def _dataclass_from(cls, data, context):
    if not isinstance(data, dict):
        raise ConfigError(context, "expected a JSON object")
    known = {f.name for f in fields(cls)} - {"root"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{context}.{sorted(unknown)[0]}", "unknown setting")
    try:
        return cls(**data)
    except (DomainError, TypeError) as e:
        raise ConfigError(context, str(e)) from e


@dataclass
class ExperimentConfig:
    d: int
    hamiltonian: Hamiltonian = None
    displacement: object = None
    zeros: list = None
    state: QuantumState = None
    t_end: float = None
    periods: int = None
    samples_per_unit: int = 200
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    root: RootFindConfig = field(default_factory=RootFindConfig)
    verify: str = None
    name: str = "experiment"

    @property
    def generator_kind(self):
        return "hamiltonian" if self.hamiltonian is not None else "displacement"

    def period(self):
        """Period of the generator, or None when it has none."""
        if self.displacement is not None:
            return float(self.d)
        found = detect_period(self.hamiltonian)
        return found[0] if found else None

    def resolved_t_end(self):
        if self.t_end is not None:
            return self.t_end
        period = self.period()
        if period is None:
            raise ConfigError("periods", "the generator has no detectable period; give t_end instead")
        return self.periods * period

    @classmethod
    def from_dict(cls, data, name=None):
        if not isinstance(data, dict):
            raise ConfigError("config", "expected a JSON object")
        d = data.get("d")
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise ConfigError("d", f"expected a positive integer, got {d!r}")

        if ("hamiltonian" in data) == ("displacement" in data):
            raise ConfigError("hamiltonian", "give exactly one of 'hamiltonian' and 'displacement'")
        if ("zeros" in data) == ("state" in data):
            raise ConfigError("zeros", "give exactly one of 'zeros' and 'state'")
        if ("t_end" in data) == ("periods" in data):
            raise ConfigError("t_end", "give exactly one of 't_end' and 'periods'")

        cfg = cls(d=d, name=data.get("name", name or "experiment"))
        if "hamiltonian" in data:
            cfg.hamiltonian = Hamiltonian.from_list(data["hamiltonian"])
            if cfg.hamiltonian.d != d:
                raise ConfigError("hamiltonian", f"matrix is {cfg.hamiltonian.d}x{cfg.hamiltonian.d}, expected d={d}")
        else:
            cfg.displacement = operator_from_spec(data["displacement"])
            if cfg.displacement.d != d:
                raise ConfigError("displacement.d", f"expected {d}, got {cfg.displacement.d}")

        if "zeros" in data:
            raw = data["zeros"]
            if not isinstance(raw, list) or len(raw) not in (d - 1, d):
                raise ConfigError("zeros", f"expected {d - 1} or {d} zeros")
            cfg.zeros = [pair_to_complex(p, f"zeros[{i}]") for i, p in enumerate(raw)]
        else:
            cfg.state = QuantumState.from_dict({"d": d, "g": data["state"]}, "state")

        if "t_end" in data:
            t_end = data["t_end"]
            if not isinstance(t_end, (int, float)) or isinstance(t_end, bool) or t_end <= 0:
                raise ConfigError("t_end", f"expected a positive number, got {t_end!r}")
            cfg.t_end = float(t_end)
        else:
            periods = data["periods"]
            if not isinstance(periods, int) or isinstance(periods, bool) or periods < 1:
                raise ConfigError("periods", f"expected a positive integer, got {periods!r}")
            cfg.periods = periods

        samples = data.get("samples_per_unit", 200)
        if not isinstance(samples, int) or samples < 1:
            raise ConfigError("samples_per_unit", f"expected a positive integer, got {samples!r}")
        cfg.samples_per_unit = samples

        cfg.root = _dataclass_from(RootFindConfig, data.get("root", {}), "root")
        tracker = _dataclass_from(TrackerConfig, data.get("tracker", {}), "tracker")
        cfg.tracker = TrackerConfig(**{**tracker.to_dict(), "root": cfg.root})

        verify = data.get("verify")
        if verify is not None and verify not in VERIFICATIONS:
            raise ConfigError("verify", f"expected one of {', '.join(VERIFICATIONS)}, got {verify!r}")
        cfg.verify = verify
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(str(path), f"cannot read file: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), f"invalid JSON at line {e.lineno}: {e.msg}") from e
        name = str(path).rsplit("/", 1)[-1].removesuffix(".json")
        logger.info("Loaded experiment %s", name)
        return cls.from_dict(data, name)
