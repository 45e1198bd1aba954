"""
Experiment configuration: a TOML file with sections [group], [walk],
[branching], [analysis] and [run].  Every key has a default, so an empty file
is a valid configuration.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import tomli
import tomli_w

from brwends.group import GroupPresentation, preset

CHECKS = ("rho", "green", "decay", "ancona", "brw", "ends", "trifurcation", "mtp", "prop32",
          "phase")


@dataclass
class GroupSection:
    preset: str = "surface_genus2"
    generators: list = field(default_factory=list)
    relators: list = field(default_factory=list)
    planar_order: list = field(default_factory=list)
    solver: str = "auto"

    def presentation(self):
        if self.preset == "custom":
            return GroupPresentation(tuple(self.generators), tuple(self.relators),
                                     tuple(self.planar_order), "custom")
        return preset(self.preset)


@dataclass
class WalkSection:
    lazy: float = -1.0                 # q(e); negative means uniform on S ∪ {e}
    weights: dict = field(default_factory=dict)   # explicit q, overrides lazy
    ball_radius: int = 8               # spectral radius and Green balls
    ancona_radius: int = 7
    ancona_samples: int = 1000
    ancona_points: int = 3
    r_grid_points: int = 8
    decay_r: str = "R_hat"             # "R_hat" or a number
    decay_max_distance: int = 8        # fit over distances 2..min(this, ball_radius)
    ancona_mode: str = "auto"          # "translate", "direct", or auto (direct on free_rank2)


@dataclass
class BranchingSection:
    law: dict = field(default_factory=lambda: {"1": 0.643, "2": 0.357})
    depth: int = 25
    flavor: str = "UGW"
    population_cap: int = 1_000_000
    visits_m: float = 1.05
    visits_depth: int = 12
    visits_runs: int = 10_000
    visits_targets: int = 10
    visits_target_radius: int = 2


@dataclass
class AnalysisSection:
    radii: list = field(default_factory=list)      # empty: 2, 4, ... up to 2/3 depth
    window: int = 3
    horizon: str = "frontier"
    trifurcation_n: int = 3
    trifurcation_budget: int = 20_000
    K: list = field(default_factory=lambda: [2, 4, 6, 8])
    prop32_runs: int = 1000
    prop32_depth: int = -1                        # negative: the Green ball radius
    mtp_laws: list = field(default_factory=lambda: [{"1": 0.5, "2": 0.5},
                                                    {"1": 0.3, "2": 0.3, "3": 0.4}])
    mtp_samples: int = 100_000
    mtp_horizon: int = 2
    confidence: float = 0.99
    m_grid: list = field(default_factory=lambda: [1.05, 1.10, 1.30])
    phase_depth: int = 30
    phase_target_radius: int = 2
    phase_window: int = 10
    phase_flavor: str = "GW"
    prop32_flavor: str = "GW"


@dataclass
class RunSection:
    seed: int = 20240101
    checks: list = field(default_factory=lambda: list(CHECKS))
    runs: int = 200
    jobs: int = 1
    out: str = "out"
    format: list = field(default_factory=lambda: ["json", "csv"])
    tolerances: dict = field(default_factory=lambda: {
        "rho_rel": 0.01, "decay_r2": 0.9, "ancona_spread": 2.0, "ancona_free": 1e-9,
        "visits_z": 3.0,
        "regime_agreement": 0.95, "critical_band": 0.05, "isolated_runs": 0.05,
        "trifurcation_runs": 0.8, "min_final_components": 3})


SECTIONS = {"group": GroupSection, "walk": WalkSection, "branching": BranchingSection,
            "analysis": AnalysisSection, "run": RunSection}


@dataclass
class ExperimentConfig:
    group: GroupSection = field(default_factory=GroupSection)
    walk: WalkSection = field(default_factory=WalkSection)
    branching: BranchingSection = field(default_factory=BranchingSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    run: RunSection = field(default_factory=RunSection)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, sec in SECTIONS.items():
            raw = dict(data.get(name, {}))
            names = {f.name for f in fields(sec)}
            bad = set(raw) - names
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            base = sec()
            if name == "run" and "tolerances" in raw:
                raw["tolerances"] = {**base.tolerances, **raw["tolerances"]}
            parts[name] = sec(**raw)
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def radii(self):
        if self.analysis.radii:
            return list(self.analysis.radii)
        top = int(self.branching.depth * 2 / 3)
        return list(range(2, top + 1, 2))

    def validate(self):
        for c in self.run.checks:
            if c not in CHECKS:
                raise ValueError(f"unknown check {c!r}")
        r = self.radii()
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be strictly increasing")
        if r and r[-1] >= self.branching.depth:
            raise ValueError("radii must stay below the depth horizon")
        if self.analysis.prop32_depth > self.walk.ball_radius:
            raise ValueError("prop32 depth cannot exceed the Green ball radius")
        need = (self.branching.visits_depth + self.branching.visits_target_radius + 1) // 2
        if "brw" in self.run.checks and self.walk.ball_radius < need:
            raise ValueError(f"ball radius {self.walk.ball_radius} too small for the "
                             f"expected-visits identity (needs {need})")
        if self.walk.ancona_mode not in ("auto", "translate", "direct"):
            raise ValueError(f"unknown ancona mode {self.walk.ancona_mode!r}")
        if self.walk.decay_r != "R_hat":
            float(self.walk.decay_r)
        for flavor in (self.branching.flavor, self.analysis.phase_flavor,
                       self.analysis.prop32_flavor):
            if flavor not in ("GW", "UGW"):
                raise ValueError(f"unknown tree flavor {flavor!r}")
        h = self.analysis.horizon
        if h != "frontier" and not str(h).isdigit():
            raise ValueError(f"horizon must be 'frontier' or a distance, got {h!r}")
        if self.run.jobs < 1:
            raise ValueError("jobs must be positive")
        self.group.presentation()

    def hash(self):
        """Digest of everything that affects results (jobs and out excluded)."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("jobs", "out")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def load_config(path=None, overrides=None):
    data = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    for key, value in (overrides or {}).items():
        sec, _, name = key.partition(".")
        data.setdefault(sec, {})[name] = value
    return ExperimentConfig.from_dict(data)


def dumps_config(cfg):
    return tomli_w.dumps(cfg.to_dict())


def loads_config(text):
    return ExperimentConfig.from_dict(tomli.loads(text))
