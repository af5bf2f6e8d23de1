"""Experiment orchestration: configs, single runs, sweeps, convergence studies.

Configs are INI-style structured text with a schema version; every run leaves
behind an echo of its config, a series.csv of EnergyReport rows, checkpoints,
the ansatz record, and a record.json with fitted exponents and monitor
constants.  Runs are deterministic functions of the config.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ansatz import InitialPerturbation, build_ansatz, compute_alphas, envelope_bound_monitor
from .diagnostics import DiagnosticsSession, EnergyReport, apriori_monitor, fit_decay
from .errors import ConfigError, NonPositiveSamples, VortexLabError
from .grid import Field, Grid, save_field
from .initial_data import FAMILIES, make_initial_data
from .params import PhysParams, lambda_from_data
from .profiles import vortex_layer_velocity
from .reporting import write_series_csv
from .solver import (
    IncState,
    SolverConfig,
    State,
    advective_dt,
    get_stepper,
    layer_state,
    leray_project,
    step_incompressible,
)

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    """Everything a run needs, parsed from structured text."""

    params: PhysParams = field(default_factory=PhysParams)
    grid: Grid = field(default_factory=Grid)
    solver: SolverConfig = field(default_factory=SolverConfig)
    family: str = "nonzero-bump"
    chi_amp: float = 0.05
    zm_amp: float = 0.0
    seed: int = 0
    lambda_auto: bool = True
    lambda_c1: float = 10.0
    horizon: float = 200.0
    sample_dt: float = 2.0
    checkpoint_every: int = 25
    fit_window: tuple[float, float] = (10.0, 200.0)
    fit_series: tuple[str, ...] = ("bv_linf", "md_phi_w_h1", "linf_d1_zT")
    eps_list: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    sweep_horizon: float = 20.0
    refine_list: tuple[int, ...] = (256, 512, 1024)
    converge_mode: str = "exact-layer"
    converge_horizon: float = 1.0
    deterministic: bool = True
    threads: int = 1

    def text(self) -> str:
        p, g, s = self.params, self.grid, self.solver
        lines = [
            "[meta]",
            f"schema_version = {SCHEMA_VERSION}",
            "",
            "[params]",
            f"rho_bar = {p.rho_bar}",
            f"u_bar = {','.join(str(v) for v in p.u_bar)}",
            f"mu = {p.mu}",
            f"lam = {p.lam}",
            f"gamma = {p.gamma}",
            f"eps = {p.eps}",
            f"t0 = {p.t0}",
            f"lambda = {'auto' if self.lambda_auto else p.Lambda}",
            f"lambda_c1 = {self.lambda_c1}",
            "",
            "[grid]",
            f"d = {g.d}",
            f"n_perp = {g.n_perp}",
            f"n3 = {g.n3}",
            f"L = {g.L}",
            "",
            "[solver]",
            f"cfl = {s.cfl}",
            f"dt = {'auto' if s.dt is None else s.dt}",
            f"muscl = {str(s.muscl).lower()}",
            "",
            "[initial]",
            f"family = {self.family}",
            f"chi_amp = {self.chi_amp}",
            f"zm_amp = {self.zm_amp}",
            f"seed = {self.seed}",
            "",
            "[run]",
            f"horizon = {self.horizon}",
            f"sample_dt = {self.sample_dt}",
            f"checkpoint_every = {self.checkpoint_every}",
            f"fit_window = {self.fit_window[0]},{self.fit_window[1]}",
            f"fit_series = {','.join(self.fit_series)}",
            "",
            "[sweep]",
            f"eps_list = {','.join(str(v) for v in self.eps_list)}",
            f"horizon = {self.sweep_horizon}",
            "",
            "[converge]",
            f"refine_list = {','.join(str(v) for v in self.refine_list)}",
            f"mode = {self.converge_mode}",
            f"horizon = {self.converge_horizon}",
            "",
            "[output]",
            f"deterministic = {str(self.deterministic).lower()}",
            f"threads = {self.threads}",
        ]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]


def parse_config(path_or_text) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    if _looks_like_path(path_or_text):
        try:
            text = Path(path_or_text).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    else:
        text = str(path_or_text)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    try:
        version = cp.getint("meta", "schema_version", fallback=SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        pr = cp["params"] if cp.has_section("params") else {}
        lambda_raw = pr.get("lambda", "auto")
        lambda_auto = str(lambda_raw).strip().lower() == "auto"
        params = PhysParams(
            rho_bar=float(pr.get("rho_bar", 1.0)),
            u_bar=tuple(float(v) for v in str(pr.get("u_bar", "1.0")).split(",")),
            mu=float(pr.get("mu", 0.01)),
            lam=float(pr.get("lam", 0.0)),
            gamma=float(pr.get("gamma", 1.4)),
            eps=float(pr.get("eps", 0.1)),
            t0=float(pr.get("t0", 100.0)),
            Lambda=1.0 if lambda_auto else float(lambda_raw),
        )
        gr = cp["grid"] if cp.has_section("grid") else {}
        grid = Grid(
            d=int(gr.get("d", 1)),
            n_perp=int(gr.get("n_perp", 64)),
            n3=int(gr.get("n3", 1024)),
            L=float(gr.get("L", 40.0)),
        )
        so = cp["solver"] if cp.has_section("solver") else {}
        dt_raw = str(so.get("dt", "auto")).strip().lower()
        solver = SolverConfig(
            cfl=float(so.get("cfl", 0.4)),
            dt=None if dt_raw == "auto" else float(dt_raw),
            muscl=str(so.get("muscl", "true")).strip().lower() != "false",
        )
        ini = cp["initial"] if cp.has_section("initial") else {}
        family = str(ini.get("family", "nonzero-bump")).strip()
        if family not in FAMILIES:
            raise ConfigError(f"unknown initial-data family {family!r}")
        run = cp["run"] if cp.has_section("run") else {}
        window = tuple(float(v) for v in str(run.get("fit_window", "10,200")).split(","))
        sweep = cp["sweep"] if cp.has_section("sweep") else {}
        conv = cp["converge"] if cp.has_section("converge") else {}
        out = cp["output"] if cp.has_section("output") else {}
        cfg = ExperimentConfig(
            params=params,
            grid=grid,
            solver=solver,
            family=family,
            chi_amp=float(ini.get("chi_amp", 0.05)),
            zm_amp=float(ini.get("zm_amp", 0.0)),
            seed=int(ini.get("seed", 0)),
            lambda_auto=lambda_auto,
            lambda_c1=float(pr.get("lambda_c1", 10.0)),
            horizon=float(run.get("horizon", 200.0)),
            sample_dt=float(run.get("sample_dt", 2.0)),
            checkpoint_every=int(run.get("checkpoint_every", 25)),
            fit_window=(window[0], window[1]),
            fit_series=tuple(
                s.strip() for s in str(run.get("fit_series", "bv_linf,md_phi_w_h1,linf_d1_zT")).split(",") if s.strip()
            ),
            eps_list=tuple(float(v) for v in str(sweep.get("eps_list", "0.4,0.2,0.1,0.05")).split(",")),
            sweep_horizon=float(sweep.get("horizon", 20.0)),
            refine_list=tuple(int(v) for v in str(conv.get("refine_list", "256,512,1024")).split(",")),
            converge_mode=str(conv.get("mode", "exact-layer")).strip(),
            converge_horizon=float(conv.get("horizon", 1.0)),
            deterministic=str(out.get("deterministic", "true")).strip().lower() != "false",
            threads=int(out.get("threads", 1)),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    _validate(cfg)
    return cfg


def _looks_like_path(obj) -> bool:
    if isinstance(obj, Path):
        return True
    return isinstance(obj, str) and "\n" not in obj and obj.endswith((".ini", ".cfg"))


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.horizon <= 0 or cfg.sample_dt <= 0:
        raise ConfigError("horizon and sample_dt must be positive")
    if cfg.fit_window[0] >= cfg.fit_window[1]:
        raise ConfigError("fit window must be increasing")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    unknown = set(cfg.fit_series) - set(EnergyReport.columns())
    if unknown:
        raise ConfigError(f"unknown fit series: {sorted(unknown)}")


# --- run products -------------------------------------------------------------------


@dataclass
class RunRecord:
    config_hash: str
    out_dir: str
    series_path: str
    checkpoint_paths: list[str]
    alphas: dict
    chi: float
    m0_norm: float
    lambda_used: float
    dt: float
    fits: dict
    monitors: dict
    envelope: dict
    zero_mass: dict
    wall_clock_s: float
    schema_version: int = SCHEMA_VERSION

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")


def resolve_params(cfg: ExperimentConfig):
    """Final PhysParams (auto Lambda needs the data norm M0) plus the data."""
    b0, v0 = make_initial_data(cfg.grid, cfg.params, cfg.family, cfg.chi_amp, cfg.zm_amp, cfg.seed)
    params = cfg.params
    ip_probe = InitialPerturbation(cfg.grid, params, b0, v0)
    m0 = ip_probe.m0_norm
    if cfg.lambda_auto:
        params = params.with_lambda(lambda_from_data(params, m0, cfg.lambda_c1))
    ip = InitialPerturbation(cfg.grid, params, b0, v0)
    return params, ip


def assemble_state(ip: InitialPerturbation) -> State:
    g, p = ip.grid, ip.params
    rho = Field(g, p.rho_bar + p.eps * ip.b0.values)
    m = [Field(g, rho.values * u.values) for u in ip.u0]
    return State(rho, m, 0.0)


def save_checkpoint(path: Path, state: State, params: PhysParams) -> None:
    path.mkdir(parents=True, exist_ok=True)
    meta = {"t": state.t, "params": dataclasses.asdict(params), "ncomp": len(state.m)}
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True))
    save_field(path / "rho.fld", state.rho)
    for i, mi in enumerate(state.m):
        save_field(path / f"m{i}.fld", mi)


def load_checkpoint(path: Path) -> tuple[State, PhysParams]:
    from .grid import load_field

    meta = json.loads((path / "meta.json").read_text())
    pd = dict(meta["params"])
    pd["u_bar"] = tuple(pd["u_bar"])
    params = PhysParams(**pd)
    rho = load_field(path / "rho.fld")
    m = [load_field(path / f"m{i}.fld") for i in range(meta["ncomp"])]
    return State(rho, m, meta["t"]), params


def _resolve_dt(cfg: ExperimentConfig, state: State, params: PhysParams) -> tuple[float, int]:
    """Fixed step dividing the sample cadence exactly."""
    dt_raw = cfg.solver.dt if cfg.solver.dt is not None else advective_dt(state, cfg.solver, params)
    n_sub = max(1, int(np.ceil(cfg.sample_dt / dt_raw - 1e-12)))
    return cfg.sample_dt / n_sub, n_sub


def run_single(cfg: ExperimentConfig, out_dir) -> RunRecord:
    """Build data, match the ansatz, evolve, sample diagnostics, persist."""
    t_start = time.time()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.text())
    params, ip = resolve_params(cfg)
    alphas = compute_alphas(ip)
    spec = build_ansatz(alphas, params)
    (out / "ansatz.txt").write_text(spec.to_text())
    state = assemble_state(ip)
    dt, n_sub = _resolve_dt(cfg, state, params)
    stepper = get_stepper(cfg.grid, params, cfg.solver, dt)
    session = DiagnosticsSession(spec)
    reports: list[EnergyReport] = [session.sample(state)]
    n_samples = int(round(cfg.horizon / cfg.sample_dt))
    checkpoints: list[str] = []
    ck0 = out / "checkpoint_000000"
    save_checkpoint(ck0, state, params)
    checkpoints.append(str(ck0))
    try:
        for k in range(1, n_samples + 1):
            for _ in range(n_sub):
                state = stepper.step(state)
            reports.append(session.sample(state))
            if cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
                ck = out / f"checkpoint_{k:06d}"
                save_checkpoint(ck, state, params)
                checkpoints.append(str(ck))
    except VortexLabError:
        ck = out / "checkpoint_failure"
        save_checkpoint(ck, state, params)
        write_series_csv(out / "series.csv", reports)
        raise
    series_path = out / "series.csv"
    write_series_csv(series_path, reports)
    fits = {}
    for name in cfg.fit_series:
        try:
            fit = fit_decay([r.t for r in reports], [getattr(r, name) for r in reports], cfg.fit_window)
            fits[name] = dataclasses.asdict(fit)
        except (NonPositiveSamples, ValueError) as exc:
            fits[name] = {"error": str(exc)}
    monitors = apriori_monitor(reports)
    env_times = np.linspace(0.0, cfg.horizon, 26)
    envelope = envelope_bound_monitor(spec, cfg.grid.x3(), env_times, j_values=(0, 1), chi=max(ip.chi, 1e-12))
    zero_mass = {
        "initial": [reports[0].mass_defect_rho, reports[0].mass_defect_mT, reports[0].mass_defect_m3],
        "final": [reports[-1].mass_defect_rho, reports[-1].mass_defect_mT, reports[-1].mass_defect_m3],
        "max_drift_per_time": _max_drift(reports),
        "acoustic_exited": bool(reports[-1].acoustic_exited),
    }
    record = RunRecord(
        config_hash=cfg.config_hash(),
        out_dir=str(out),
        series_path=str(series_path),
        checkpoint_paths=checkpoints,
        alphas={"a0": alphas.a0, "a_perp": list(alphas.a_perp), "a3": alphas.a3},
        chi=ip.chi,
        m0_norm=ip.m0_norm,
        lambda_used=params.Lambda,
        dt=dt,
        fits=fits,
        monitors=monitors,
        envelope=envelope,
        zero_mass=zero_mass,
        wall_clock_s=time.time() - t_start,
    )
    record.save(out / "record.json")
    return record


def _max_drift(reports: list[EnergyReport]) -> float:
    """Largest per-unit-time change of any mass defect while signals stay
    at least five cells from the boundary."""
    best = 0.0
    for a, b in zip(reports[:-1], reports[1:]):
        if b.signal_margin_cells < 5 or b.acoustic_exited:
            break
        dt = b.t - a.t
        for col in ("mass_defect_rho", "mass_defect_mT", "mass_defect_m3"):
            best = max(best, abs(getattr(b, col) - getattr(a, col)) / dt)
    return best


# --- Mach sweep -----------------------------------------------------------------------


def _sweep_one(args):
    cfg, eps, dt, n_sub, n_samples = args
    params = dataclasses.replace(cfg.params, eps=eps)
    b0, v0 = make_initial_data(cfg.grid, cfg.params, cfg.family, cfg.chi_amp, cfg.zm_amp, cfg.seed)
    ip = InitialPerturbation(cfg.grid, params, b0, v0)
    state = assemble_state(ip)
    stepper = get_stepper(cfg.grid, params, cfg.solver, dt)
    from .diagnostics import mach_metrics

    q_series, div_series, u_snaps = [], [], []
    qn, dn = mach_metrics(state, params)
    q_series.append(qn)
    div_series.append(dn)
    u_snaps.append(np.stack([u.values for u in state.velocity()]))
    for _ in range(n_samples):
        for _ in range(n_sub):
            state = stepper.step(state)
        qn, dn = mach_metrics(state, params)
        q_series.append(qn)
        div_series.append(dn)
        u_snaps.append(np.stack([u.values for u in state.velocity()]))
    return eps, np.array(q_series), np.array(div_series), np.stack(u_snaps)


def run_mach_sweep(cfg: ExperimentConfig, out_dir) -> dict:
    """Fixed initial data across a geometric eps ladder plus one
    incompressible reference; reports time-averaged q, div and velocity gaps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eps_list = cfg.eps_list
    if len(eps_list) < 3:
        raise ConfigError("mach sweep needs at least 3 eps values")
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    ratios = [a / b for a, b in zip(eps_list[:-1], eps_list[1:])]
    if max(ratios) / min(ratios) > 1.1:
        raise ConfigError("eps list must be geometrically spaced")
    (out / "config.ini").write_text(cfg.text())

    b0, v0 = make_initial_data(cfg.grid, cfg.params, cfg.family, cfg.chi_amp, cfg.zm_amp, cfg.seed)
    params0 = dataclasses.replace(cfg.params, eps=eps_list[0])
    ip0 = InitialPerturbation(cfg.grid, params0, b0, v0)
    probe = assemble_state(ip0)
    dt_raw = cfg.solver.dt if cfg.solver.dt is not None else advective_dt(probe, cfg.solver, params0)
    n_sub = max(1, int(np.ceil(cfg.sample_dt / dt_raw - 1e-12)))
    dt = cfg.sample_dt / n_sub
    n_samples = int(round(cfg.sweep_horizon / cfg.sample_dt))
    sample_times = np.arange(n_samples + 1) * cfg.sample_dt

    # incompressible reference: layer plus the Leray projection of v0
    proj = leray_project(v0)
    x3 = cfg.grid.x3_broadcast()
    layer = vortex_layer_velocity(x3, 0.0, cfg.params)
    u_ref = [
        Field(cfg.grid, np.broadcast_to(layer[i], cfg.grid.shape) + proj[i].values)
        for i in range(cfg.grid.d)
    ]
    u_ref.append(proj[cfg.grid.d])
    ref = IncState(u_ref, 0.0)
    ref_snaps = [np.stack([u.values for u in ref.u])]
    for _ in range(n_samples):
        for _ in range(n_sub):
            ref = step_incompressible(ref, cfg.solver, cfg.params, dt)
        ref_snaps.append(np.stack([u.values for u in ref.u]))
    ref_snaps = np.stack(ref_snaps)

    jobs = [(cfg, eps, dt, n_sub, n_samples) for eps in eps_list]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]

    w = cfg.grid.trapezoid_weights()
    tang_axes = tuple(range(2, 2 + cfg.grid.d))
    series: dict[str, np.ndarray] = {"t": sample_times}
    table = {"eps": [], "q_l2_avg": [], "divu_l2_avg": [], "u_err_l2_avg": []}
    for eps, q_series, div_series, u_snaps in results:
        diff_sq = ((u_snaps - ref_snaps) ** 2).mean(axis=tang_axes)  # (ns+1, ncomp, n3+1)
        err_t = np.sqrt((diff_sq @ w).sum(axis=1))
        tag = f"{eps:g}"
        series[f"q_eps{tag}"] = q_series
        series[f"div_eps{tag}"] = div_series
        series[f"uerr_eps{tag}"] = err_t
        table["eps"].append(eps)
        table["q_l2_avg"].append(float(np.mean(q_series)))
        table["divu_l2_avg"].append(float(np.mean(div_series)))
        table["u_err_l2_avg"].append(float(np.mean(err_t)))

    _write_columns_csv(out / "sweep_series.csv", series)
    _write_columns_csv(out / "sweep.csv", {k: np.asarray(v) for k, v in table.items()})
    q = table["q_l2_avg"]
    ue = table["u_err_l2_avg"]
    record = {
        "config_hash": cfg.config_hash(),
        "eps_list": list(eps_list),
        "table": table,
        "q_strictly_decreasing": all(b < a for a, b in zip(q[:-1], q[1:])),
        "u_err_strictly_decreasing": all(b < a for a, b in zip(ue[:-1], ue[1:])),
        "q_reduction_factors": [b / a for a, b in zip(q[:-1], q[1:])],
        "u_err_reduction_factors": [b / a for a, b in zip(ue[:-1], ue[1:])],
        "dt": dt,
        "schema_version": SCHEMA_VERSION,
    }
    (out / "sweep_record.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def _write_columns_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    arrays = [np.atleast_1d(np.asarray(columns[n], dtype=float)) for n in names]
    with open(path, "w") as f:
        f.write(",".join(names) + "\n")
        for row in zip(*arrays):
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


# --- convergence study ---------------------------------------------------------------


def _manufactured_shear(params: PhysParams, amplitude=0.3, omega=2.0, width=3.0):
    """Exact shear solution rho = rho_bar, m1 = rho_bar f(x3, t), m3 = 0 with
    a compensating tangential-momentum source; exercises the time integrator,
    viscosity and forcing injection."""

    def f(x3, t):
        return amplitude * (1.0 + np.sin(omega * t)) * np.exp(-(x3 ** 2) / width ** 2)

    def source(x3, t):
        shape = np.exp(-(x3 ** 2) / width ** 2)
        df_dt = amplitude * omega * np.cos(omega * t) * shape
        d2f = amplitude * (1.0 + np.sin(omega * t)) * shape * (4.0 * x3 ** 2 / width ** 4 - 2.0 / width ** 2)
        return params.rho_bar * df_dt - params.mu * d2f

    return f, source


def run_convergence(cfg: ExperimentConfig, out_dir) -> dict:
    """Refinement study against an exact solution (Richardson-style orders)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(cfg.refine_list) < 3:
        raise ConfigError("convergence study needs at least 3 refinements")
    if cfg.converge_mode not in ("exact-layer", "shear-manufactured"):
        raise ConfigError(f"unknown convergence mode {cfg.converge_mode!r}")
    (out / "config.ini").write_text(cfg.text())
    params = cfg.params
    if cfg.converge_mode == "shear-manufactured" and params.u_bar_mag > 0:
        params = dataclasses.replace(params, u_bar=tuple(0.0 for _ in params.u_bar))
    T = cfg.converge_horizon
    n3_list = sorted(cfg.refine_list)
    base_state = None
    errors: list[dict] = []
    wall: list[float] = []
    for n3 in n3_list:
        g = Grid(d=cfg.grid.d, n_perp=cfg.grid.n_perp, L=cfg.grid.L, n3=n3)
        if cfg.solver.dt is not None:
            dt = cfg.solver.dt * n3_list[0] / n3
        else:
            probe = layer_state(g, params, 0.0)
            dt = advective_dt(probe, cfg.solver, params) * n3_list[0] / n3 / 2.0
        nsteps = max(1, int(round(T / dt)))
        dt = T / nsteps
        t0 = time.time()
        if cfg.converge_mode == "exact-layer":
            state = layer_state(g, params, 0.0)
            stepper = get_stepper(g, params, cfg.solver, dt)
            for _ in range(nsteps):
                state = stepper.step(state)
            exact = vortex_layer_velocity(g.x3(), state.t, params)
            u = state.m[0].values / state.rho.values
            err_u = float(np.max(np.abs(u - exact[0])))
            err_rho = float(np.max(np.abs(state.rho.values - params.rho_bar)))
        else:
            fexact, source = _manufactured_shear(params)
            x3 = g.x3()
            m1 = np.broadcast_to(params.rho_bar * fexact(x3, 0.0), g.shape).copy()
            state = State(
                Field(g, np.full(g.shape, params.rho_bar)),
                [Field(g, m1), Field(g, np.zeros(g.shape))],
                0.0,
            )
            forcing = lambda comp, t: source(x3, t) if comp == 0 else 0.0
            stepper = get_stepper(g, params, cfg.solver, dt)
            for _ in range(nsteps):
                state = stepper.step(state, forcing=forcing)
            err_u = float(np.max(np.abs(state.m[0].values / state.rho.values - fexact(x3, state.t))))
            err_rho = float(np.max(np.abs(state.rho.values - params.rho_bar)))
        wall.append(time.time() - t0)
        errors.append({"n3": n3, "dt": dt, "err_u_linf": err_u, "err_rho_linf": err_rho})
    orders = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        ratio = coarse["err_u_linf"] / max(fine["err_u_linf"], 1e-300)
        orders.append(
            {
                "from_n3": coarse["n3"],
                "to_n3": fine["n3"],
                "error_ratio": ratio,
                "observed_order": float(np.log2(ratio) / np.log2(fine["n3"] / coarse["n3"])),
                "flag": "pre-asymptotic" if coarse["n3"] < 64 else "",
            }
        )
    record = {
        "config_hash": cfg.config_hash(),
        "mode": cfg.converge_mode,
        "errors": errors,
        "orders": orders,
        "wall_clock_s": wall,
        "schema_version": SCHEMA_VERSION,
    }
    (out / "convergence_record.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    _write_columns_csv(
        out / "convergence.csv",
        {
            "n3": [e["n3"] for e in errors],
            "dt": [e["dt"] for e in errors],
            "err_u_linf": [e["err_u_linf"] for e in errors],
            "err_rho_linf": [e["err_rho_linf"] for e in errors],
        },
    )
    return record
