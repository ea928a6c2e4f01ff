"""End-to-end orchestration: offline artifacts, online sweeps over the test
cases, Monte Carlo moments and the CSV reports.

Artifacts live under ``<out>/artifacts/<stage>/`` with a ``manifest.json``
holding content hashes; every load verifies them. Reports are CSV files under
``<out>/reports/``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .deim import MagicPointSet, collateral_basis, deim_offline, deim_solve, stencil_size, training_matrix
from .errors import ConfigurationError, NumericError, ReduxError
from .fem import EPS_MAX, MAX_ITER, CostCounters, fe_solve, temperature
from .galerkin_rb import aggregate, eta, rb_solve, rel_error
from .hyper_reduction import ReducedIntegrationDomain, hr_offline, hr_solve
from .mesh import Mesh, generate_plate_with_hole, quadrature_table
from .model import ParameterVector
from .parallel import parallel_map
from .pod import ReducedBasis, SnapshotSet, collect_snapshots, parameter_grid, pod_basis, projection_error
from .sampling import elements_touching
from .rbmx import read_manifest, read_rbmx, write_manifest, write_rbmx
from .uq import GENERATOR, K_MAX, e_mc, error_cdf, moment_errors, moments_from_fields, sample_parameters

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    n_angular: int = 80
    n_radial: int = 10
    hole_radius: float = 0.25
    half_side: float = 0.5
    grid_points: int = 5
    m: int = 32
    m_list: list = field(default_factory=lambda: [16, 24, 32, 48, 60])
    deim_modes: int = 300
    deim_modes_list: list = field(default_factory=lambda: [150, 200, 250, 300])
    deim_modes_uq: int = 400
    hr_layers: int = 1
    hr_layers_list: list = field(default_factory=lambda: [1, 2, 3, 4])
    hr_layers_uq: int = 2
    eps_max: float = EPS_MAX
    max_iter: int = MAX_ITER
    seed: int = 2024
    n_samples: int = 1000
    k_max: int = K_MAX
    out_dir: str = "redux_out"
    threads: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "PipelineConfig":
        cfg = dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})
        cfg.validate()
        return cfg

    @property
    def all_m(self) -> list[int]:
        return sorted(set(self.m_list) | {self.m})

    @property
    def all_deim_modes(self) -> list[int]:
        return sorted(set(self.deim_modes_list) | {self.deim_modes, self.deim_modes_uq})

    @property
    def all_layers(self) -> list[int]:
        return sorted(set(self.hr_layers_list) | {self.hr_layers, self.hr_layers_uq})

    def validate(self) -> None:
        def need(ok, msg):
            if not ok:
                raise ConfigurationError(msg)

        need(self.grid_points >= 1, "grid_points must be >= 1")
        need(all(int(v) >= 1 for v in self.all_m), "basis dimensions must be >= 1")
        need(all(int(v) >= 1 for v in self.all_deim_modes), "DEIM mode counts must be >= 1")
        need(all(int(v) >= 0 for v in self.all_layers), "HR layers must be >= 0")
        need(self.eps_max > 0, "eps_max must be positive")
        need(self.max_iter >= 1, "max_iter must be >= 1")
        need(self.n_samples >= 2, "n_samples must be >= 2")
        need(self.k_max >= 2, "k_max must be >= 2")

    def mesh(self) -> Mesh:
        return generate_plate_with_hole(self.n_angular, self.n_radial, self.hole_radius, self.half_side)


def testcase_A(n: int = 100) -> list[ParameterVector]:
    """``n + 1`` points on the segment from ``(0, 0, 1)`` to ``(1, 1, 2)``."""
    p0 = np.array([0.0, 0.0, 1.0, 1.0, 0.5])
    p1 = np.array([1.0, 1.0, 2.0, 1.0, 0.5])
    return [ParameterVector.from_list(p0 + (j / n) * (p1 - p0)) for j in range(n + 1)]


def testcase_B(cfg: PipelineConfig) -> list[ParameterVector]:
    return sample_parameters(cfg.seed, cfg.n_samples).samples


# -- artifact store ------------------------------------------------------------


class Workspace:
    """Offline artifacts of one configuration, built on demand and persisted."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.out_dir)
        self.art = self.root / "artifacts"
        self.reports = self.root / "reports"
        self._mesh = None
        self._snaps = None
        self._basis = None
        self._mps: dict[int, MagicPointSet] = {}
        self._rids: dict[int, ReducedIntegrationDomain] = {}
        self.truth_fields: dict[str, np.ndarray] = {}
        self.reduced_fields: dict[str, dict[str, np.ndarray]] = {}

    def stage_dir(self, name: str) -> Path:
        d = self.art / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _manifest(self, stage: str):
        path = self.art / stage / "manifest.json"
        return read_manifest(path) if path.exists() else None

    # mesh
    def mesh(self, rebuild: bool = False) -> Mesh:
        if self._mesh is not None and not rebuild:
            return self._mesh
        meta = None if rebuild else self._manifest("mesh")
        mesh = self.cfg.mesh()
        if meta is not None and meta.get("mesh_id") == mesh.mesh_id:
            mesh = Mesh.load(self.art / "mesh" / "mesh.json")
        else:
            d = self.stage_dir("mesh")
            mesh.save(d / "mesh.json")
            write_manifest(d / "manifest.json", {"stage": "mesh", "mesh_id": mesh.mesh_id,
                                                 "n_nodes": mesh.n_nodes, "n_el": mesh.n_el,
                                                 "n": mesh.n}, ["mesh.json"])
        self._mesh = mesh
        return mesh

    # snapshots
    def snapshots(self, rebuild: bool = False) -> SnapshotSet:
        if self._snaps is not None and not rebuild:
            return self._snaps
        mesh = self.mesh()
        meta = None if rebuild else self._manifest("snapshots")
        key = {"mesh_id": mesh.mesh_id, "grid_points": self.cfg.grid_points, "eps_max": self.cfg.eps_max}
        d = self.stage_dir("snapshots")
        if meta is not None and all(meta.get(k) == v for k, v in key.items()):
            S = read_rbmx(d / "S.rbmx")
            Y = read_rbmx(d / "Y.rbmx")
            snaps = SnapshotSet(S, [ParameterVector.from_list(p) for p in meta["params"]],
                                meta["eps_max"], meta["mesh_id"], meta["iterations"], [list(Y.T)])
        else:
            params = parameter_grid(self.cfg.grid_points)
            snaps = collect_snapshots(mesh, params, self.cfg.eps_max, self.cfg.threads)
            write_rbmx(d / "S.rbmx", snaps.S)
            write_rbmx(d / "Y.rbmx", training_matrix(snaps.residuals))
            write_manifest(d / "manifest.json",
                           dict(key, stage="snapshots", params=[p.to_list() for p in snaps.params],
                                iterations=snaps.iterations),
                           ["S.rbmx", "Y.rbmx"])
            self._basis = None
        self._snaps = snaps
        return snaps

    def training_set(self) -> np.ndarray:
        return training_matrix(self.snapshots().residuals)

    # POD
    def basis(self, m: int | None = None, rebuild: bool = False) -> ReducedBasis:
        m = self.cfg.m if m is None else m
        if self._basis is None or rebuild:
            mesh = self.mesh()
            snaps = self.snapshots()
            m_max = max(self.cfg.all_m)
            if m_max > snaps.s:
                raise ConfigurationError(
                    f"basis dimensions {self.cfg.all_m} (m and m_list) exceed the {snaps.s} snapshots")
            meta = None if rebuild else self._manifest("pod")
            d = self.stage_dir("pod")
            if meta is not None and meta.get("m") == m_max and meta.get("snapshots") == self._snap_hash():
                self._basis = ReducedBasis(mesh, read_rbmx(d / "V.rbmx"), read_rbmx(d / "eigvals.rbmx")[:, 0])
            else:
                self._basis = pod_basis(snaps, mesh, m=m_max)
                write_rbmx(d / "V.rbmx", self._basis.V)
                write_rbmx(d / "eigvals.rbmx", self._basis.eigvals)
                write_manifest(d / "manifest.json",
                               {"stage": "pod", "m": m_max, "snapshots": self._snap_hash()},
                               ["V.rbmx", "eigvals.rbmx"])
                self._mps.clear()
                self._rids.clear()
        if m == self._basis.m:
            return self._basis
        cache = self.__dict__.setdefault("_truncated", {})
        if m not in cache or cache[m][0] is not self._basis:
            cache[m] = (self._basis, self._basis.truncate(m))
        return cache[m][1]

    def _snap_hash(self) -> str:
        self.snapshots()
        return read_manifest(self.art / "snapshots" / "manifest.json")["files"]["S.rbmx"]

    def _basis_hash(self) -> str:
        self.basis()
        return read_manifest(self.art / "pod" / "manifest.json")["files"]["V.rbmx"]

    # DEIM
    def magic_points(self, M: int, rebuild: bool = False) -> MagicPointSet:
        if M in self._mps and not rebuild:
            return self._mps[M]
        mesh = self.mesh()
        d = self.stage_dir("deim")
        meta = None if rebuild else self._manifest("deim")
        M_max = max(self.cfg.all_deim_modes + [M])
        fresh = (meta is not None and meta.get("snapshots") == self._snap_hash()
                 and meta.get("basis") == self._basis_hash() and meta.get("M_max", 0) >= M)
        if fresh:
            U = read_rbmx(d / "U.rbmx")[:, :M]
            stored = meta["magic"].get(str(M))
            if stored is None:
                mp = deim_offline(U)
            else:
                mp = MagicPointSet(I=np.asarray(stored["I"], dtype=np.int64), U=U)
        else:
            cb = collateral_basis(self.training_set(), M=M_max)
            write_rbmx(d / "U.rbmx", cb.U)
            write_rbmx(d / "singular_values.rbmx", cb.singular_values)
            self._mps.clear()
            mps = {}
            for k in sorted(set(self.cfg.all_deim_modes) | {M}):
                mps[k] = deim_offline(cb.U[:, :k])
            self._write_deim_manifest(d, M_max, mps)
            mp = mps[M]
        mp.attach(self.basis(self.cfg.m).V, mesh)
        self._mps[M] = mp
        return mp

    def _write_deim_manifest(self, d: Path, M_max: int, mps: dict) -> None:
        mesh = self.mesh()
        magic = {}
        for k, mp in mps.items():
            mp.attach(self.basis(self.cfg.m).V, mesh)
            write_rbmx(d / f"X_M{k}.rbmx", mp.X)
            magic[str(k)] = {"I": mp.I.tolist(), "stencil_elements": mp.stencil_elements.tolist(),
                             "M_bar": stencil_size(mp, mesh)[1]}
        files = ["U.rbmx", "singular_values.rbmx"] + [f"X_M{k}.rbmx" for k in mps]
        write_manifest(d / "manifest.json",
                       {"stage": "deim", "M_max": M_max, "m": self.cfg.m, "snapshots": self._snap_hash(),
                        "basis": self._basis_hash(), "magic": magic}, files)

    # HR
    def rid(self, layers: int, rebuild: bool = False) -> ReducedIntegrationDomain:
        if layers in self._rids and not rebuild:
            return self._rids[layers]
        d = self.stage_dir("hr")
        name = f"rid_l{layers}.json"
        meta = None if rebuild else self._manifest("hr")
        key = {"basis": self._basis_hash(), "m": self.cfg.m, "mesh_id": self.mesh().mesh_id}
        valid = meta is not None and all(meta.get(k) == v for k, v in key.items())
        if valid and name in meta["files"]:
            rid = ReducedIntegrationDomain.from_dict(json.loads((d / name).read_text()))
        else:
            rid = hr_offline(self.basis(self.cfg.m), layers=layers)
            if not valid:
                for stale in d.glob("rid_l*.json"):
                    stale.unlink()
            (d / name).write_text(json.dumps(dict(rid.to_dict(), **key), sort_keys=True))
            names = sorted(p.name for p in d.glob("rid_l*.json"))
            write_manifest(d / "manifest.json", dict(key, stage="hr"), names)
        self._rids[layers] = rid
        return rid


# -- online sweeps -----------------------------------------------------------------


@dataclass
class SampleRecord:
    j: int
    method: str
    config: str
    delta: float
    eta: float | None
    iterations: int
    counters: dict


@dataclass
class SweepResult:
    case: str
    params: list
    records: list = field(default_factory=list)

    def deltas(self, method: str, config: str) -> list:
        return [r.delta for r in self.records if r.method == method and r.config == config]

    def etas(self, method: str, config: str) -> list:
        return [r.eta for r in self.records if r.method == method and r.config == config]

    def configs(self, method: str) -> list:
        seen = []
        for r in self.records:
            if r.method == method and r.config not in seen:
                seen.append(r.config)
        return seen


def _safe(solve):
    """Run a reduced solve; numerical failures become ``None`` (recorded as inf)."""
    try:
        return solve()
    except ConfigurationError:
        raise
    except ReduxError as exc:
        log.warning("reduced solve failed: %s", exc)
        return None


def run_sweep(ws: Workspace, case: str, params: list, keep_fields: bool = False) -> SweepResult:
    """Truth and reduced solves over ``params`` for every configured method."""
    cfg = ws.cfg
    mesh = ws.mesh()
    threads = cfg.threads

    def truth(p):
        w, rep = fe_solve(mesh, p, cfg.eps_max, cfg.max_iter)
        return w, temperature(mesh, w, p), rep

    fe = parallel_map(truth, params, threads)
    res = SweepResult(case, params)
    for j, (_, _, rep) in enumerate(fe):
        res.records.append(SampleRecord(j, "FE", "full", 0.0, None, rep.iterations,
                                        rep.counters.as_dict()))
    if keep_fields:
        ws.truth_fields[case] = np.vstack([u for _, u, _ in fe])
        ws.reduced_fields[case] = {}

    def record(method, conf, solver, with_eta=None, keep=False):
        def one(item):
            j, p = item
            st = _safe(lambda: solver(p))
            if st is None:
                return SampleRecord(j, method, conf, float("inf"), None, 0, {}), None
            u = st.temperature()
            d = rel_error(mesh, u, fe[j][1])
            e = eta(with_eta, st, fe[j][0]) if with_eta is not None else None
            return SampleRecord(j, method, conf, d, e, st.report.iterations,
                                st.report.counters.as_dict()), (u if keep else None)

        out = parallel_map(one, list(enumerate(params)), threads)
        res.records.extend(r for r, _ in out)
        if keep:
            if any(u is None for _, u in out):
                bad = next(r.j for r, u in out if u is None)
                raise NumericError(f"{method} ({conf}) failed at sample {bad} of case {case}")
            ws.reduced_fields[case][method] = np.vstack([u for _, u in out])

    for m in cfg.all_m:
        b = ws.basis(m)
        record("RB", f"m={m}", lambda p, b=b: rb_solve(b, p, cfg.eps_max, cfg.max_iter), with_eta=b,
               keep=keep_fields and m == cfg.m)
    b = ws.basis(cfg.m)
    for M in cfg.all_deim_modes:
        mp = ws.magic_points(M)
        record("DEIM", f"M={M}", lambda p, mp=mp: deim_solve(b, mp, p, cfg.eps_max, cfg.max_iter),
               keep=keep_fields and M == cfg.deim_modes_uq)
    for ell in cfg.all_layers:
        rid = ws.rid(ell)
        record("HR", f"l={ell}", lambda p, rid=rid: hr_solve(b, rid, p, cfg.eps_max, cfg.max_iter),
               keep=keep_fields and ell == cfg.hr_layers_uq)
    return res


# -- reports -----------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def report_projection_errors(ws: Workspace) -> Path:
    snaps = ws.snapshots()
    full = ws.basis(max(ws.cfg.all_m))
    xi = full.eigvals
    rows = [(m, projection_error(snaps, ws.basis(m)), float(xi[m - 1] / xi[0])) for m in ws.cfg.all_m]
    return write_csv(ws.reports / "projection_errors.csv", ["m", "E_m", "eig_ratio"], rows)


def report_sweep(ws: Workspace, res: SweepResult) -> list[Path]:
    case = res.case
    out = []
    rows = [(r.j, r.method, r.config, r.delta, r.eta, r.iterations) for r in res.records]
    out.append(write_csv(ws.reports / f"errors_{case}.csv",
                         ["j", "method", "config", "delta", "eta", "iterations"], rows))
    eta_rows, delta_rows, summary = [], [], []
    for conf in res.configs("RB"):
        m = int(conf.split("=")[1])
        a = aggregate(res.etas("RB", conf))
        eta_rows.append((m, a["min"], a["mean"], a["max"], a["count"]))
        a = aggregate(res.deltas("RB", conf))
        delta_rows.append((m, a["min"], a["mean"], a["max"], a["failures"]))
    out.append(write_csv(ws.reports / f"eta_{case}.csv", ["m", "min", "mean", "max", "count"], eta_rows))
    out.append(write_csv(ws.reports / f"delta_rb_{case}.csv", ["m", "min", "mean", "max", "failures"],
                         delta_rows))
    cdf_rows = []
    for method in ("RB", "DEIM", "HR"):
        for conf in res.configs(method):
            ds = res.deltas(method, conf)
            a = aggregate(ds)
            finite = np.array([d for d in ds if np.isfinite(d)])
            p80 = float(np.quantile(np.where(np.isfinite(ds), ds, np.inf), 0.8, method="inverted_cdf"))
            summary.append((method, conf, a["min"], a["mean"], a["max"], p80, a["failures"],
                            len(finite)))
            t, P = error_cdf(ds)
            cdf_rows.extend((method, conf, ti, Pi) for ti, Pi in zip(t, P))
    out.append(write_csv(ws.reports / f"delta_summary_{case}.csv",
                         ["method", "config", "min", "mean", "max", "p80", "failures", "count"], summary))
    out.append(write_csv(ws.reports / f"cdf_{case}.csv", ["method", "config", "t", "P"], cdf_rows))
    return out


def report_costs(ws: Workspace, res: SweepResult) -> Path:
    """Per-iteration counters averaged over the converged samples of a sweep."""
    n_gp = quadrature_table(ws.mesh()).n_gp
    rows = []
    for method in ("FE", "RB", "DEIM", "HR"):
        for conf in res.configs(method):
            recs = [r for r in res.records if r.method == method and r.config == conf and r.iterations]
            its = sum(r.iterations for r in recs)
            tot = CostCounters()
            for r in recs:
                tot += CostCounters(**r.counters)
            per = {k: v / its for k, v in tot.as_dict().items()} if its else dict.fromkeys(tot.as_dict(), 0.0)
            rows.append((method, conf, its / max(len(recs), 1), per["c_reloc"], per["c_const"], per["c_rhs"],
                         per["c_jac"], per["c_sol"], per["c_const"] / n_gp))
    return write_csv(ws.reports / f"costs_{res.case}.csv",
                     ["method", "config", "mean_iterations", "c_reloc", "c_const", "c_rhs", "c_jac", "c_sol",
                      "quadrature_fraction"], rows)


def emit_geometry_report(mesh: Mesh, rid: ReducedIntegrationDomain | None = None,
                         mp: MagicPointSet | None = None, path: Path | None = None) -> list[tuple]:
    """Per-node roles for plotting: HR ``internal``/``rid``/``unused`` and DEIM
    ``magic``/``stencil``/``unused``."""
    hr = np.full(mesh.n_nodes, "unused", dtype=object)
    de = np.full(mesh.n_nodes, "unused", dtype=object)
    if rid is not None:
        hr[rid.all_nodes] = "rid"
        hr[mesh.free_nodes[rid.interior]] = "internal"
    if mp is not None:
        stencil = mp.stencil_nodes
        if stencil is None:
            stencil = np.unique(mesh.elements[elements_touching(mesh, mp.I)])
        de[stencil] = "stencil"
        de[mesh.free_nodes[mp.I]] = "magic"
    rows = [(i, float(x), float(y), hr[i], de[i]) for i, (x, y) in enumerate(mesh.nodes)]
    if path is not None:
        write_csv(path, ["node", "x", "y", "hr_role", "deim_role"], rows)
    return rows


def report_offline(ws: Workspace) -> list[Path]:
    mesh = ws.mesh()
    cfg = ws.cfg
    n_gp = quadrature_table(mesh).n_gp
    rows = []
    for M in cfg.all_deim_modes:
        mp = ws.magic_points(M)
        _, M_bar = stencil_size(mp, mesh)
        rows.append(("DEIM", f"M={M}", M, M_bar, len(mp.stencil_elements),
                     9 * len(mp.stencil_elements) / n_gp))
    for ell in cfg.all_layers:
        rid = ws.rid(ell)
        rows.append(("HR", f"l={ell}", rid.l, rid.l_bar, len(rid.elements), 9 * len(rid.elements) / n_gp))
    out = [write_csv(ws.reports / "sampling_sets.csv",
                     ["method", "config", "points", "points_bar", "elements", "quadrature_fraction"], rows)]
    geo = ws.reports / "geometry.csv"
    emit_geometry_report(mesh, ws.rid(cfg.hr_layers), ws.magic_points(cfg.deim_modes), geo)
    out.append(geo)
    return out


def run_uq(ws: Workspace, params: list | None = None) -> list[Path]:
    """Moments of FE, RB, DEIM and HR over the case-B samples and their errors."""
    cfg = ws.cfg
    mesh = ws.mesh()
    if "B" not in ws.truth_fields:
        params = testcase_B(cfg) if params is None else params
        run_sweep(ws, "B", params, keep_fields=True)
    fe = moments_from_fields(ws.truth_fields["B"], cfg.k_max, "FE")
    red = {tag: moments_from_fields(F, cfg.k_max, tag) for tag, F in ws.reduced_fields["B"].items()}
    errs = {tag: moment_errors(mo, fe, mesh, cfg.k_max) for tag, mo in red.items()}
    rows = [(k, errs["RB"][k - 1], errs["DEIM"][k - 1], errs["HR"][k - 1]) for k in range(1, cfg.k_max + 1)]
    d = ws.stage_dir("uq")
    names = []
    for tag, mo in [("FE", fe)] + sorted(red.items()):
        F = np.column_stack([mo.moment(k) for k in range(1, cfg.k_max + 1)])
        write_rbmx(d / f"moments_{tag}.rbmx", F)
        names.append(f"moments_{tag}.rbmx")
    write_manifest(d / "manifest.json",
                   {"stage": "uq", "seed": cfg.seed, "n_p": fe.n_p, "generator": GENERATOR, "k_max": cfg.k_max,
                    "methods": {"RB": {"m": cfg.m}, "DEIM": {"m": cfg.m, "M": cfg.deim_modes_uq},
                                "HR": {"m": cfg.m, "layers": cfg.hr_layers_uq}}},
                   names)
    return [
        write_csv(ws.reports / "moment_errors.csv", ["k", "E_RB", "E_DEIM", "E_HR"], rows),
        write_csv(ws.reports / "uq_summary.csv", ["n_p", "seed", "generator", "E_MC"],
                  [(fe.n_p, cfg.seed, GENERATOR, e_mc(fe, mesh))]),
    ]


STAGES = ("mesh", "snapshots", "pod", "deim-offline", "hr-offline", "sweep-A", "sweep-B", "uq", "report")


def run_pipeline(cfg: PipelineConfig, stages=STAGES) -> dict:
    """Offline stages, sweeps over cases A and B, Monte Carlo moments and reports.

    A failing stage re-raises with its name; artifacts written so far stay on disk.
    Returns a mapping from stage name to the files it produced.
    """
    ws = Workspace(cfg)
    produced: dict[str, list] = {}
    actions = stage_actions(ws)
    for name in stages:
        if name not in actions:
            raise ConfigurationError(f"unknown stage {name!r}")
        t0 = time.perf_counter()
        try:
            produced[name] = [str(p) for p in actions[name]()]
        except ReduxError as exc:
            raise type(exc)(f"stage {name}: {exc}") from exc
        log.info("stage %s done in %.1f s", name, time.perf_counter() - t0)
    return produced


def sweep_and_report(ws: Workspace, case: str, keep_fields: bool = False) -> list[Path]:
    params = testcase_A() if case == "A" else testcase_B(ws.cfg)
    res = run_sweep(ws, case, params, keep_fields=keep_fields)
    return report_sweep(ws, res) + [report_costs(ws, res)]


def stage_actions(ws: Workspace) -> dict:
    """Stage name to a callable returning the report files it wrote."""
    cfg = ws.cfg

    def offline(build):
        def run():
            build()
            return []
        return run

    return {
        "mesh": offline(ws.mesh),
        "snapshots": offline(ws.snapshots),
        "pod": lambda: [report_projection_errors(ws)],
        "deim-offline": offline(lambda: [ws.magic_points(M) for M in cfg.all_deim_modes]),
        "hr-offline": offline(lambda: [ws.rid(ell) for ell in cfg.all_layers]),
        "sweep-A": lambda: sweep_and_report(ws, "A"),
        "sweep-B": lambda: sweep_and_report(ws, "B", keep_fields=True),
        "uq": lambda: run_uq(ws),
        "report": lambda: report_offline(ws),
    }
