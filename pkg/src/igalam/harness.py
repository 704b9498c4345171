"""Benchmark orchestration: configuration, solving, recovery, reports.

The benchmark is a quarter of a simply supported cross-ply hollow cylinder
under an inner-surface pressure that varies as cos(4 theta) around the
circumference and sinusoidally along the axis.  The slenderness S fixes all
dimensions relative to the laminate thickness h: mean radius R = S*h and
length L = R.

A run solves the primal problem with the configured method, extracts
through-thickness stress profiles at the configured stations, applies the
equilibrium recovery, compares against a layerwise reference (cached on
disk), and writes per-station CSV profiles plus a JSON report and a
summary error table.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .boundary import simply_supported_tube
from .collocation import solve_collocation
from .errors import ConfigError
from .galerkin import solve_galerkin
from .geometry import (DisplacementField, build_quarter_cylinder, frame_jet,
                       map_jet)
from .layerwise import layerwise_patch, solve_layerwise
from .material import EngineeringConstants, Layup, Ply, cross_ply
from .recovery import profile_error, recover, stress_profile

__all__ = [
    "RunConfig",
    "Benchmark",
    "sample_grid",
    "run",
    "run_sweep",
    "cache_reference",
]

_METHODS = ("galerkin", "collocation", "layerwise")

_TABLE1 = {
    "e1": 25.0, "e2": 1.0, "e3": 1.0,
    "g23": 0.2, "g13": 0.5, "g12": 0.5,
    "nu23": 0.25, "nu13": 0.25, "nu12": 0.25,
}


@dataclass
class RunConfig:
    """One benchmark run, JSON round-trippable.

    Units are mm and MPa throughout.  ``layup`` is a list of
    [thickness_mm, angle_deg] pairs, bottom (inner surface) first;
    ``stations`` are (fraction of L, fraction of the swept angle) pairs.
    For the layerwise method the thickness control count is implied by one
    C0 segment of degree r per ply, so ``control_counts`` may have length 2.
    """

    method: str = "galerkin"
    s_ratio: float = 20.0
    layup: list = field(default_factory=lambda: [[1.0, 0.0 + 90.0 * (k % 2)] for k in range(11)])
    material: dict = field(default_factory=lambda: dict(_TABLE1))
    degrees: tuple = (4, 4, 3)
    control_counts: tuple = (22, 22, 4)
    load_mpa: float = -1.0
    stations: list = field(default_factory=lambda: [[1.0 / 3.0, 1.0 / 3.0]])
    samples_per_ply: int = 64
    out_dir: str = "out"
    reference: dict = field(
        default_factory=lambda: {"degrees": [4, 4, 2], "inplane": [24, 24]}
    )
    use_cache: bool = True
    cache_dir: str | None = None

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not self.s_ratio > 0:
            raise ConfigError("S must be positive")
        if not self.layup:
            raise ConfigError("layup is empty")
        for entry in self.layup:
            if len(entry) != 2 or entry[0] <= 0:
                raise ConfigError(f"bad layup entry {entry!r}")
        self.degrees = tuple(int(d) for d in self.degrees)
        if len(self.degrees) != 3 or min(self.degrees) < 1:
            raise ConfigError("degrees must be three integers >= 1")
        counts = tuple(int(c) for c in self.control_counts)
        if self.method == "layerwise":
            if len(counts) not in (2, 3):
                raise ConfigError("control_counts must have length 2 or 3")
            counts = counts[:2]
            for c, p in zip(counts, self.degrees[:2]):
                if c < p + 1:
                    raise ConfigError("control count below degree+1")
        else:
            if len(counts) != 3:
                raise ConfigError("control_counts must have length 3")
            for c, p in zip(counts, self.degrees):
                if c < p + 1:
                    raise ConfigError("control count below degree+1")
        self.control_counts = counts
        for st in self.stations:
            if len(st) != 2 or not (0 <= st[0] <= 1 and 0 <= st[1] <= 1):
                raise ConfigError(f"station fractions outside [0,1]: {st!r}")
        if self.samples_per_ply < 2:
            raise ConfigError("samples_per_ply must be >= 2")
        ref = dict(self.reference or {})
        if ref.get("overkill"):
            ref.setdefault("degrees", [6, 6, 4])
            ref.setdefault("inplane", [36, 36])
        else:
            ref.setdefault("degrees", [4, 4, 2])
            ref.setdefault("inplane", [24, 24])
        if len(ref["degrees"]) != 3 or len(ref["inplane"]) != 2:
            raise ConfigError("reference needs degrees (3) and inplane (2)")
        self.reference = ref

    def to_dict(self):
        return {
            "method": self.method,
            "s_ratio": self.s_ratio,
            "layup": [[float(t), float(a)] for t, a in self.layup],
            "material": dict(self.material),
            "degrees": list(self.degrees),
            "control_counts": list(self.control_counts),
            "load_mpa": self.load_mpa,
            "stations": [[float(a), float(b)] for a, b in self.stations],
            "samples_per_ply": self.samples_per_ply,
            "out_dir": self.out_dir,
            "reference": dict(self.reference),
            "use_cache": self.use_cache,
            "cache_dir": self.cache_dir,
        }

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def sample_grid(n_axial, n_theta):
    """Uniform station fractions including the boundary rows.

    Quarters (n=5) give the 5x5 layout used for the benchmark figures.
    """
    if n_axial < 2 or n_theta < 2:
        raise ConfigError("need at least 2 samples per direction")
    fa = np.linspace(0.0, 1.0, n_axial)
    ft = np.linspace(0.0, 1.0, n_theta)
    return [[float(a), float(t)] for a in fa for t in ft]


class Benchmark:
    """Geometry, material, load, and BCs for one configuration."""

    def __init__(self, config):
        self.config = config
        self.material = EngineeringConstants(**config.material)
        self.layup = Layup(
            [Ply(t, a, self.material) for t, a in config.layup]
        )
        h = self.layup.thickness
        self.h = h
        self.mean_radius = config.s_ratio * h
        self.length = self.mean_radius
        self.inner_radius = self.mean_radius - h / 2
        self.outer_radius = self.mean_radius + h / 2
        self.base_patch = build_quarter_cylinder(
            self.inner_radius, self.outer_radius, self.length
        )
        self.sigma0 = config.load_mpa
        self.theta_span = np.pi / 2

    def pressure(self, x):
        """Inner-surface load intensity q at global position x."""
        theta = np.arctan2(x[2], x[1])
        return self.sigma0 * np.cos(4 * theta) * np.sin(np.pi * x[0] / self.length)

    def traction(self, x, frame):
        return -self.pressure(x) * frame.D[:, 2]

    def bcs(self):
        return simply_supported_tube(self.traction)

    def theta_of_xi2(self, xi2):
        x = map_jet(self.base_patch, (0.0, float(xi2), 0.0), 1).x
        return np.arctan2(x[2], x[1])

    def xi2_of_theta_fraction(self, fraction):
        """Parametric coordinate of a station given as a fraction of the sweep.

        The circumferential parameter of the rational arc is not
        proportional to the physical angle, so stations specified as angle
        fractions are located by inverting theta(xi2) numerically.
        """
        target = fraction * self.theta_span
        if fraction <= 0.0:
            return 1.0
        if fraction >= 1.0:
            return 0.0
        return brentq(
            lambda t: self.theta_of_xi2(t) - target, 0.0, 1.0, xtol=1e-14
        )

    def station_xi(self, station):
        return (float(station[0]), self.xi2_of_theta_fraction(station[1]))

    def primal_patch(self):
        cfg = self.config
        if cfg.method == "layerwise":
            return layerwise_patch(
                self.base_patch, self.layup, cfg.degrees, cfg.control_counts
            )
        return self.base_patch.refined(
            degrees=cfg.degrees, num_basis=cfg.control_counts
        )

    def solve(self):
        cfg = self.config
        if cfg.method == "galerkin":
            patch = self.primal_patch()
            report = solve_galerkin(patch, self.layup, self.bcs())
        elif cfg.method == "collocation":
            patch = self.primal_patch()
            report = solve_collocation(patch, self.layup, self.bcs())
        else:
            patch, report = solve_layerwise(
                self.base_patch, self.layup, self.bcs(),
                cfg.degrees, cfg.control_counts,
            )
        return patch, report


def _canonical_json(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _reference_payload(bench):
    cfg = bench.config
    return {
        "kind": "layerwise_reference",
        "s_ratio": cfg.s_ratio,
        "layup": [[float(t), float(a)] for t, a in cfg.layup],
        "material": {k: cfg.material[k] for k in sorted(cfg.material)},
        "load_mpa": cfg.load_mpa,
        "degrees": list(cfg.reference["degrees"]),
        "inplane": list(cfg.reference["inplane"]),
    }


def cache_reference(bench, cache_dir, use_cache=True):
    """Layerwise reference field for a benchmark, cached on disk.

    The cache key is a hash of everything the reference depends on; a
    corrupt or mismatched file is recomputed with a warning.  Returns
    (patch, field, info dict).
    """
    if bench.config.reference.get("overkill"):
        warnings.warn(
            "overkill reference requested; expect far more time and memory "
            "than the default desk-scale reference",
            stacklevel=2,
        )
    payload = _reference_payload(bench)
    blob = _canonical_json(payload)
    key = hashlib.sha256(blob.encode()).hexdigest()[:16]
    ref_deg = tuple(payload["degrees"])
    ref_inplane = tuple(payload["inplane"])
    patch = layerwise_patch(
        bench.base_patch, bench.layup, ref_deg, ref_inplane
    )
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"reference_{key}.npz"
    info = {"key": key, "cache_hit": False, "path": str(path) if path else None}

    if use_cache and path is not None and path.exists():
        try:
            with np.load(path, allow_pickle=False) as data:
                stored = str(data["payload"])
                coeffs = np.array(data["coeffs"])
            if stored != blob:
                raise ValueError("payload mismatch")
            expected = patch.space.shape + (3,)
            if coeffs.shape != expected:
                raise ValueError("coefficient shape mismatch")
            info["cache_hit"] = True
            return patch, DisplacementField(patch, coeffs), info
        except Exception as exc:
            warnings.warn(
                f"reference cache {path} unusable ({exc}); recomputing",
                stacklevel=2,
            )

    t0 = time.perf_counter()
    _, report = solve_layerwise(
        bench.base_patch, bench.layup, bench.bcs(), ref_deg, ref_inplane
    )
    info["solve_seconds"] = time.perf_counter() - t0
    info["residual"] = report.residual
    info["ndof"] = report.ndof
    if use_cache and path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, coeffs=report.field.coeffs, payload=blob)
    return patch, report.field, info


_CSV_COLUMNS = [
    "x3_mm", "s11", "s22", "s12",
    "s13_constitutive", "s23_constitutive", "s33_constitutive",
    "s13_recovered", "s23_recovered", "s33_recovered",
    "ply_index",
]


def _write_station_csv(path, profile, recovered, scale):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_CSV_COLUMNS)
        for i in range(profile.x3.size):
            w.writerow([
                f"{profile.x3[i]:.10g}",
                f"{profile.sigma[i, 0, 0] / scale:.10g}",
                f"{profile.sigma[i, 1, 1] / scale:.10g}",
                f"{profile.sigma[i, 0, 1] / scale:.10g}",
                f"{profile.sigma[i, 0, 2] / scale:.10g}",
                f"{profile.sigma[i, 1, 2] / scale:.10g}",
                f"{profile.sigma[i, 2, 2] / scale:.10g}",
                f"{recovered.s13[i] / scale:.10g}",
                f"{recovered.s23[i] / scale:.10g}",
                f"{recovered.s33[i] / scale:.10g}",
                int(profile.ply[i]),
            ])


def _station_result(bench, patch, fld, ref_patch, ref_field, station,
                    samples_per_ply):
    xi1, xi2 = bench.station_xi(station)
    snapshot = frame_jet(patch, (xi1, xi2, 0.5), 0).D
    prof = stress_profile(
        patch, bench.layup, fld, (xi1, xi2),
        samples_per_ply=samples_per_ply, order=2, snapshot=snapshot,
    )
    q_bottom = bench.pressure(map_jet(patch, (xi1, xi2, 0.0), 1).x)
    rec = recover(prof, bottom_s33=q_bottom)

    result = {
        "fraction_axial": float(station[0]),
        "fraction_theta": float(station[1]),
        "xi": [xi1, xi2],
        "q_bottom": float(q_bottom),
        "profile": prof,
        "recovered": rec,
    }

    if ref_field is not None:
        ref_prof = stress_profile(
            ref_patch, bench.layup, ref_field, (xi1, xi2),
            samples_per_ply=samples_per_ply, order=0, snapshot=snapshot,
        )
        # Symmetry stations of the 5x5 grid have out-of-plane profiles that
        # are zero up to discretization noise; those rows switch to absolute
        # errors rather than dividing by noise.
        atol = 1e-8 * abs(bench.sigma0)
        before, after, flags = {}, {}, {}
        for name, b, a, r in [
            ("s13", prof.s13, rec.s13, ref_prof.s13),
            ("s23", prof.s23, rec.s23, ref_prof.s23),
            ("s33", prof.s33, rec.s33, ref_prof.s33),
        ]:
            eb, fb = profile_error(b, r, atol=atol)
            ea, fa = profile_error(a, r, atol=atol)
            before[name] = eb
            after[name] = ea
            flags[name] = bool(fb or fa)
        result["errors_before"] = before
        result["errors_after"] = after
        result["absolute_error_flags"] = flags
        result["reference_profile"] = ref_prof
    return result


def run(config, compare=True, write_outputs=True):
    """Full pipeline: solve, recover at all stations, compare, report.

    With ``compare=False`` the layerwise reference is skipped and the
    report carries only recovered profiles.  Returns the report dict; the
    heavyweight per-station arrays are attached under a non-serialized
    key ``_stations``.
    """
    bench = Benchmark(config)
    out = Path(config.out_dir)
    if write_outputs:
        out.mkdir(parents=True, exist_ok=True)

    timings = {}
    t0 = time.perf_counter()
    patch, solve_report = bench.solve()
    timings["solve_seconds"] = time.perf_counter() - t0

    ref_patch = ref_field = None
    ref_info = None
    if compare:
        cache_dir = config.cache_dir
        if cache_dir is None:
            cache_dir = str(out / "cache")
        t0 = time.perf_counter()
        ref_patch, ref_field, ref_info = cache_reference(
            bench, cache_dir, use_cache=config.use_cache
        )
        timings["reference_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stations = []
    for station in config.stations:
        stations.append(_station_result(
            bench, patch, solve_report.field, ref_patch, ref_field,
            station, config.samples_per_ply,
        ))
    timings["recovery_seconds"] = time.perf_counter() - t0

    scale = abs(config.load_mpa)
    report = {
        "config": config.to_dict(),
        "method": config.method,
        "ndof": solve_report.ndof,
        "residual": float(solve_report.residual),
        "timings": timings,
        "metadata": {
            "normalization": scale,
            "theta_span_rad": bench.theta_span,
            "thickness_layout": (
                "one C0 segment per ply"
                if config.method == "layerwise"
                else "single smooth span"
            ),
        },
        "stations": [],
    }
    if ref_info is not None:
        report["reference"] = ref_info

    for i, st in enumerate(stations):
        entry = {k: st[k] for k in
                 ("fraction_axial", "fraction_theta", "xi", "q_bottom")}
        for k in ("errors_before", "errors_after", "absolute_error_flags"):
            if k in st:
                entry[k] = st[k]
        if write_outputs:
            csv_name = f"station_{i:02d}.csv"
            _write_station_csv(out / csv_name, st["profile"],
                               st["recovered"], scale)
            entry["csv"] = csv_name
        report["stations"].append(entry)

    if write_outputs:
        with open(out / "report.json", "w") as f:
            json.dump(report, f, indent=2)
        if compare:
            _write_table(out / "table2.csv", [report])

    report["_stations"] = stations
    report["_field"] = solve_report.field
    report["_patch"] = patch
    return report


def _write_table(path, reports):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["S", "method", "phase", "e13", "e23", "e33"])
        for rep in reports:
            st = rep["stations"][0]
            if "errors_before" not in st:
                continue
            s_val = rep["config"]["s_ratio"]
            for phase, key in (("before", "errors_before"),
                               ("after", "errors_after")):
                e = st[key]
                w.writerow([
                    f"{s_val:g}", rep["method"], phase,
                    f"{e['s13']:.6g}", f"{e['s23']:.6g}", f"{e['s33']:.6g}",
                ])


def run_sweep(config, s_values, write_outputs=True):
    """Repeat a comparison run over slenderness values, one table overall."""
    reports = []
    base = config.to_dict()
    out_root = Path(config.out_dir)
    for s in s_values:
        sub = dict(base)
        sub["s_ratio"] = float(s)
        sub["out_dir"] = str(out_root / f"S{s:g}")
        if sub.get("cache_dir") is None:
            sub["cache_dir"] = str(out_root / "cache")
        reports.append(run(RunConfig.from_dict(sub),
                           write_outputs=write_outputs))
    if write_outputs:
        out_root.mkdir(parents=True, exist_ok=True)
        _write_table(out_root / "table2.csv", reports)
    return reports
