"""Run configuration and the staged pipeline behind the command line.

Stages, in order: potential, metric_geodesics, junction_geometry,
heteroclinics, boundary_ansatz, elliptic_solver, gamma_limit, report.
Every file a stage writes is listed in the manifest with its sha256.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ansatz import PROFILE_PAIRS, build_boundary_map, phi_residual_profile
from .errors import ConfigError, TripointError
from .geodesics import DistanceTable, GeodesicOptions, distance_table, lattice_table
from .heteroclinic import equipartition_residual, solve_connection
from .io import sha256, write_csv, write_json
from .junction import solve_angles
from .limit import (LimitReport, annulus_grad_error, annulus_sup_error, energy_I0, l1_distance,
                    measure_junction_angles, partition_perturbation_probe, quantize_to_wells,
                    relative_energy_G, u0_field, u0_partition)
from .potential import potential_from_config, validate_hypotheses
from .solver import DiskGrid, apriori_bound_check, energy_Ieps, make_grid, solve_steady

log = logging.getLogger(__name__)

STAGES = ("potential", "metric_geodesics", "junction_geometry", "heteroclinics",
          "boundary_ansatz", "elliptic_solver", "gamma_limit", "report")


@dataclass
class RunConfig:
    potential: dict = field(default_factory=lambda: {"family": "product"})
    delta: float | None = None          # None: 0.15 * min(alpha)
    theta0: float = 0.0
    eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    n: int = 256
    alphas: list = field(default_factory=lambda: [0.5])
    tol: float = 1e-6
    max_steps: int = 2_000_000
    seed: int = 0
    out: str = "tripoint-run"
    profile_L: float = 10.0
    profile_n: int = 2001
    geodesic_nodes: int = 101
    lattice_n: int = 0                  # > 0 adds the Dijkstra cross-check
    probe_trials: int = 100
    synthetic_table: list | None = None  # 3x3 distances; skips the geodesic stage

    def validate(self):
        eps = [float(e) for e in self.eps]
        if not eps:
            raise ConfigError("eps ladder is empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"eps ladder must be strictly decreasing: {eps}")
        h = 2.0 / (self.n - 1)
        if min(eps) < 3 * h:
            raise ConfigError(f"eps={min(eps)} is below 3h={3 * h:.4g} for n={self.n}")
        if self.n < 64:
            raise ConfigError("n must be at least 64")
        if any(not 0 < a < 1 for a in self.alphas):
            raise ConfigError("alphas must lie in (0, 1)")
        return self

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def digest(self):
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    stages: dict = field(default_factory=dict)      # stage -> {file: sha256}
    versions: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)      # file -> sha256
    halted: dict | None = None

    def add(self, stage, paths, root):
        ent = self.stages.setdefault(stage, {})
        for p in paths:
            p = Path(p)
            ent[str(p.relative_to(root))] = sha256(p)

    def checksums(self):
        out = dict(self.inputs)
        out.update({f: c for ent in self.stages.values() for f, c in ent.items()})
        return out

    def to_dict(self):
        return asdict(self)


class StageError(TripointError):
    def __init__(self, stage, err):
        self.stage = stage
        self.err = err
        super().__init__(f"stage {stage}: {type(err).__name__}: {err}")


def _versions():
    import numba
    import scipy
    import skimage
    return {"tripoint": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "scikit-image": skimage.__version__}


class Pipeline:
    """Stage runner holding intermediate results in memory."""

    def __init__(self, cfg: RunConfig, out=None):
        self.cfg = cfg.validate()
        self.root = Path(out or cfg.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(cfg.digest(), versions=_versions())
        self.state = {}
        cfg_file = self._path("config.json")
        cfg_file.write_text(cfg.to_json())
        self.manifest.inputs["config.json"] = sha256(cfg_file)

    def _path(self, name):
        return self.root / name

    def _run(self, stage, fn):
        if stage in self.manifest.stages:
            return
        t0 = time.perf_counter()
        try:
            paths = fn()
        except TripointError as exc:
            self.manifest.halted = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
            self.write_manifest()
            raise StageError(stage, exc) from exc
        self.manifest.add(stage, paths, self.root)
        self.manifest.timings[stage] = round(time.perf_counter() - t0, 3)
        log.info("stage %s done in %.1fs", stage, self.manifest.timings[stage])

    # -- stages

    def potential(self):
        def fn():
            pot = potential_from_config(self.cfg.potential)
            rep = validate_hypotheses(pot, seed=self.cfg.seed)
            self.state["potential"] = pot
            return [write_json(self._path("hypotheses.json"), rep.to_dict())]
        self._run("potential", fn)
        return self.state["potential"]

    def geodesics(self):
        pot = self.potential()

        def fn():
            if self.cfg.synthetic_table is not None:
                table = DistanceTable(np.asarray(self.cfg.synthetic_table, float), {}, "synthetic")
                out = {"table": table.to_dict()}
            else:
                table = distance_table(pot, GeodesicOptions(nodes=self.cfg.geodesic_nodes))
                out = {"table": table.to_dict()}
                if self.cfg.lattice_n > 0:
                    out["lattice"] = lattice_table(pot, self.cfg.lattice_n).to_dict()
            self.state["table"] = table
            return [write_json(self._path("distances.json"), out)]
        self._run("metric_geodesics", fn)
        return self.state["table"]

    def angles(self):
        table = self.geodesics()

        def fn():
            ang = solve_angles(table, self.cfg.theta0)
            self.state["angles"] = ang
            return [write_json(self._path("angles.json"), ang.to_dict())]
        self._run("junction_geometry", fn)
        return self.state["angles"]

    def connections(self):
        pot = self.potential()
        self.angles()

        def fn():
            table = self.state["table"]
            profs, summary, paths = {}, [], []
            for (i, j) in PROFILE_PAIRS:
                path = table.paths.get((min(i, j) - 1, max(i, j) - 1))
                path = None if path is None else path.points
                if path is not None and i > j:
                    path = path[::-1]
                p = solve_connection(pot, i, j, L=self.cfg.profile_L, n=self.cfg.profile_n, path=path)
                profs[(i, j)] = p
                s = p.summary()
                s["equipartition_residual"] = equipartition_residual(p)
                summary.append(s)
                f = self._path(f"profile_{i}{j}.txt")
                f.write_text(p.to_text())
                paths.append(f)
            self.state["profiles"] = profs
            paths.append(write_json(self._path("connections.json"), summary))
            return paths
        self._run("heteroclinics", fn)
        return self.state["profiles"]

    def ansatz(self):
        pot, ang, profs = self.potential(), self.angles(), self.connections()

        def fn():
            bmap = build_boundary_map(pot, ang, delta=self.cfg.delta, profiles=profs)
            self.state["bmap"] = bmap
            rows = []
            for e in self.cfg.eps:
                for a in self.cfg.alphas:
                    r = phi_residual_profile(bmap, e, a)
                    rows.append((e, a, r.h, r.sup))
            return [write_csv(self._path("phi_residual.csv"), ["eps", "alpha", "h", "sup_residual"], rows),
                    write_json(self._path("ansatz.json"), {"delta": bmap.partition.delta,
                                                            "bound": bmap.bound()})]
        self._run("boundary_ansatz", fn)
        return self.state["bmap"]

    def solve(self, eps_list=None):
        pot, bmap = self.potential(), self.ansatz()
        eps_list = list(self.cfg.eps if eps_list is None else eps_list)

        def fn():
            sols, paths, reports = {}, [], []
            for e in eps_list:
                _, f0 = make_grid(self.cfg.n, e, bmap)
                rep, u, _ = solve_steady(f0, pot, tol=self.cfg.tol, max_steps=self.cfg.max_steps)
                bsup = float(np.max(np.linalg.norm(np.moveaxis(f0.u, 0, -1)[f0.grid.band], axis=-1)))
                ok, node, wv, wb = apriori_bound_check(u, pot, bsup)
                sols[e] = u
                tag = f"eps{e:g}"
                paths += u.dump(self._path(f"field_{tag}.raw"), {"residual": rep.residual})
                paths.append(rep.write_trace(self._path(f"trace_{tag}.csv")))
                d = rep.to_dict(wall=False)
                d.update({"apriori_W_ok": ok, "apriori_worst_node": node, "apriori_W": wv,
                          "apriori_W_bound": wb})
                reports.append(d)
            self.state["solutions"] = sols
            paths.append(write_json(self._path("solve.json"), reports))
            return paths
        self._run("elliptic_solver", fn)
        return self.state["solutions"]

    def diagnostics(self):
        pot, table, ang, bmap = self.potential(), self.geodesics(), self.angles(), self.ansatz()
        sols = self.solve()

        def fn():
            grid = DiskGrid(self.cfg.n)
            u0 = u0_field(grid, ang, pot.wells)
            base = u0_partition(grid, ang)
            I0 = energy_I0(base, table, ang)
            paths = [base.to_pgm(self._path("labels_u0.pgm"))]
            rows, limits = [], []
            for e, u in sols.items():
                part = quantize_to_wells(u, pot.wells)
                paths.append(part.to_pgm(self._path(f"labels_eps{e:g}.pgm")))
                Ie = energy_Ieps(u, pot)
                try:
                    fit = measure_junction_angles(part)
                except TripointError:
                    fit = None
                ann = {a: annulus_sup_error(u, bmap, e, a) for a in self.cfg.alphas}
                grad = {a: annulus_grad_error(u, bmap, e, a) for a in self.cfg.alphas}
                rep = LimitReport(e, I0, Ie, l1_distance(u, u0), fit, ann, grad,
                                  relative_energy_G(u, bmap, pot))
                limits.append(rep.to_dict())
                aerr = (np.max(np.abs(fit.alpha - ang.alpha)) if fit is not None else float("nan"))
                rows.append((e, rep.l1, ann[self.cfg.alphas[0]], rep.G, Ie, float(np.rad2deg(aerr))))
            probe = partition_perturbation_probe(base, table, ang, self.cfg.probe_trials, self.cfg.seed)
            self.state["limits"] = limits
            self.state["probe"] = probe
            paths.append(write_csv(self._path("convergence.csv"),
                                   ["eps", "l1", "annulus_sup", "G", "I_eps", "angle_err_deg"], rows))
            paths.append(write_json(self._path("limit.json"), {"I0": I0.to_dict(), "per_eps": limits,
                                                                "probe": probe.to_dict()}))
            return paths
        self._run("gamma_limit", fn)
        return self.state["limits"]

    def report(self):
        limits = self.diagnostics()

        def fn():
            ang = self.state["angles"]
            last = limits[-1]
            rep = {"predicted_alpha_deg": np.rad2deg(ang.alpha).tolist(),
                   "measured_alpha_deg": None if last["angles"] is None else last["angles"]["alpha_deg"],
                   "smallest_eps": last["eps"],
                   "I0": last["I0"]["total"],
                   "I_eps": [d["I_eps"] for d in limits],
                   "l1": [d["l1"] for d in limits],
                   "probe_all_pass": self.state["probe"].all_pass}
            if rep["measured_alpha_deg"] is not None:
                rep["max_angle_error_deg"] = float(np.max(np.abs(
                    np.array(rep["measured_alpha_deg"]) - np.array(rep["predicted_alpha_deg"]))))
            self.state["report"] = rep
            return [write_json(self._path("report.json"), rep)]
        self._run("report", fn)
        return self.state["report"]

    def write_manifest(self):
        write_json(self._path("manifest.json"), self.manifest.to_dict())
        return self.manifest


def cmd_pipeline(cfg: RunConfig, out=None) -> RunManifest:
    p = Pipeline(cfg, out)
    p.report()
    return p.write_manifest()

