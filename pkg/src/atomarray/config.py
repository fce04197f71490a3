"""Run configuration: YAML loading, schema validation and defaults."""

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import yaml

from .greens import RegularizationParams
from .impurity import Quadrature
from .model import ConfigError, FourLevelBipartite, LatticeSpec, TwoLevel

DEFAULTS = {
    "name": "run",
    "seed": 0,
    "output_dir": "results",
    "lattice": {"spacing_lambda0": 0.24, "kind": "simple_cubic"},
    "regularization": {"a_ho_over_spacing": 0.09, "pole_tolerance_k0": 1e-6,
                       "gaussian_cutoff": 1e-12},
    "scheme": {"type": "two_level"},
    "mesh": {"octant_points_per_axis": 40, "bins": 164},
    "path": {"points_per_segment": 60},
    "finite": {"sizes": [6, 8, 10]},
    "impurity": {
        "method": "infinite",
        "detunings_gamma0": [0.2],
        "gamma_ratio": 1e-3,
        "separation_spacings": [1, 0, 0],
        "sizes": [8, 10, 12, 14],
        "quadrature": {"octant_points_per_axis": 24, "levels": 6, "ratio": 4,
                       "broadenings_k0sq": [1e-2, 5e-3, 2.5e-3], "tolerance": 1e-3},
    },
    "dynamics": {"detuning_gamma0": 0.2, "gamma_ratio": 1e-3, "duration_inv_gammaI": 300.0,
                 "time_steps": 3001},
}

# keys that do not change any result and stay out of the hash
_UNHASHED = ("output_dir", "threads")


def schema():
    text = resources.files("atomarray").joinpath("config.schema.json").read_text()
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _pointer(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return f"{path or '<root>'}: {err.message}"


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    data: dict

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("<root>: configuration must be a mapping")
        validator = jsonschema.Draft202012Validator(schema())
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            raise ConfigError("; ".join(_pointer(e) for e in errors))
        data = _merge(DEFAULTS, raw)
        cfg = cls(data)
        cfg.lattice()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def dump(self, hashed_only=False):
        data = self.hashed() if hashed_only else self.data
        return yaml.safe_dump(data, sort_keys=True)

    def hashed(self):
        """The part of the configuration that determines the results."""
        return {k: copy.deepcopy(v) for k, v in self.data.items() if k not in _UNHASHED}

    @property
    def hash(self):
        text = json.dumps(self.hashed(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    def lattice(self, extent=None):
        lat = self.data["lattice"]
        ext = extent if extent is not None else lat.get("extent_sites")
        return LatticeSpec(lat["spacing_lambda0"], lat["kind"], tuple(ext) if ext else None)

    def regularization(self):
        r = self.data["regularization"]
        return RegularizationParams(
            r["a_ho_over_spacing"] * self.data["lattice"]["spacing_lambda0"],
            pole_tolerance=r["pole_tolerance_k0"], cutoff=r["gaussian_cutoff"])

    def scheme(self):
        s = self.data["scheme"]
        if s["type"] == "two_level":
            return TwoLevel()
        return FourLevelBipartite(s.get("delta_b_gamma0", 0.0), s.get("delta_gamma0", 0.0),
                                  s.get("delta_pi_gamma0", 0.0))

    def quadrature(self):
        q = self.data["impurity"]["quadrature"]
        return Quadrature(q["octant_points_per_axis"], q["levels"], q["ratio"],
                          tuple(q["broadenings_k0sq"]), q["tolerance"])
