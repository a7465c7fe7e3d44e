"""
experiment.py

Run configuration schema and the orchestration of the five modes:

* kernel     build (or load) the kernel profile and dump it, plus the stable table for generic alpha
* solve      one run on the line (marching, or the small-data Picard iteration) with its trace and
             final field
* dirichlet  modal runs on (-R, R), one per initial amplitude
* sweep      one solve per eta, rows scheduled on a pytaskexec worker pool
* verify     the oracle suite of fracfujita.verify

Every CSV gets a JSON sidecar holding the fully resolved configuration.
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, ValidationError, model_validator
from pytaskexec import TaskRunner, taskify
from tqdm import tqdm

from fracfujita.config import settings
from fracfujita.core.dirichlet import DirichletConfig, dirichlet_march, ode_blowup_time
from fracfujita.core.errors import ConfigError, FracError
from fracfujita.core.kernel import KernelProfile, heat_kernel, profile_mass
from fracfujita.core.operators import Field, SpaceGrid, TimeMesh, suggest_half_width
from fracfujita.core.solver import CRITICAL, GLOBAL, DecayTest, SolveConfig, is_critical, march, picard_trace
from fracfujita.core.specfun import ModelParams, stable_profile
from fracfujita.core.store import ArtifactCache, write_csv, write_field, write_json, write_rows
from fracfujita.verify import SUITE_CHECKS, run_suite

logger = logging.getLogger(__name__)

MODES = ("kernel", "solve", "dirichlet", "sweep", "verify")
SWEEP_FIELDS = ["eta", "eta_c", "verdict", "blowup_time", "uncertainty", "max_weighted_ratio", "flag", "error"]
SUBCRITICAL_FLAG = "subcritical: blow-up beyond horizon"


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridBlock(_Block):
    half_width: Optional[float] = PydanticField(default=None, gt=0)  # None: sized from the kernel tail
    dx: float = PydanticField(default=0.05, gt=0)


class MeshBlock(_Block):
    horizon: float = PydanticField(default=10.0, gt=0)
    panels: int = PydanticField(default=200, ge=1)
    grading: Optional[float] = PydanticField(default=None, ge=1)
    first: Optional[float] = PydanticField(default=None, gt=0)  # set: geometric mesh

    def build(self) -> TimeMesh:
        if self.first is not None:
            return TimeMesh.geometric(self.horizon, self.panels, self.first)
        return TimeMesh.graded(self.horizon, self.panels, self.grading)


class InitialBlock(_Block):
    kind: Literal["indicator", "kernel", "mode", "zero"] = "indicator"
    amplitude: float = PydanticField(default=0.01, ge=0)
    a: float = -1.0
    b: float = 1.0
    gamma: float = PydanticField(default=1.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.kind == "indicator" and not self.a < self.b:
            raise ValueError("indicator support needs a < b")
        return self


class ThresholdBlock(_Block):
    blowup_threshold: float = PydanticField(default_factory=lambda: settings.blowup_threshold, gt=0)
    picard_tol: float = PydanticField(default_factory=lambda: settings.picard_tol, gt=0)
    picard_max_iters: int = PydanticField(default_factory=lambda: settings.picard_max_iters, ge=1)
    confirm_refinement: bool = True
    step_control: bool = True
    nonlinear: bool = True


class SolveBlock(_Block):
    method: Literal["march", "picard"] = "march"
    small_data_delta: float = PydanticField(default_factory=lambda: settings.small_data_delta, gt=0)


class DecayBlock(_Block):
    gamma: float = PydanticField(gt=0)
    delta: float = PydanticField(gt=0)


class SweepBlock(_Block):
    etas: List[float] = PydanticField(default_factory=list)
    eta_range: Optional[Tuple[float, float, int]] = None  # (start, stop, count), linear

    def values(self) -> List[float]:
        etas = list(self.etas)
        if self.eta_range is not None:
            start, stop, count = self.eta_range
            etas += [float(v) for v in np.linspace(start, stop, count)]
        return etas


class DirichletBlock(_Block):
    radius: float = PydanticField(default=1.0, gt=0)
    n_grid: int = PydanticField(default=399, ge=3)
    n_modes: int = PydanticField(default_factory=lambda: settings.dirichlet_modes, ge=1)
    amplitudes: List[float] = PydanticField(default_factory=lambda: [1.0])


class VerifyBlock(_Block):
    checks: List[str] = PydanticField(default_factory=lambda: list(SUITE_CHECKS))
    samples: int = PydanticField(default_factory=lambda: settings.mc_samples, ge=1000)


class ExperimentConfig(_Block):
    """One run: mode, model parameters and the numeric blocks the mode reads."""

    mode: Literal["kernel", "solve", "dirichlet", "sweep", "verify"]
    params: ModelParams
    grid: GridBlock = PydanticField(default_factory=GridBlock)
    mesh: MeshBlock = PydanticField(default_factory=MeshBlock)
    initial: InitialBlock = PydanticField(default_factory=InitialBlock)
    thresholds: ThresholdBlock = PydanticField(default_factory=ThresholdBlock)
    decay: Optional[DecayBlock] = None
    solve: SolveBlock = PydanticField(default_factory=SolveBlock)
    sweep: SweepBlock = PydanticField(default_factory=SweepBlock)
    dirichlet: DirichletBlock = PydanticField(default_factory=DirichletBlock)
    verify: VerifyBlock = PydanticField(default_factory=VerifyBlock)
    output_dir: Optional[str] = None
    seed: int = PydanticField(default_factory=lambda: settings.mc_seed, ge=0)
    jobs: Optional[int] = PydanticField(default=None, ge=1)

    @model_validator(mode="after")
    def _mode_requirements(self):
        if self.mode == "sweep":
            etas = self.sweep.values()
            if not etas:
                raise ValueError("sweep needs a nonempty eta list")
            if any(eta <= 0 for eta in etas):
                raise ValueError("sweep etas must be positive")
        if self.mode in ("solve", "sweep", "dirichlet") and self.params.dim != 1:
            raise ValueError(f"mode {self.mode} runs on the line only (d = 1)")
        if self.mode == "dirichlet" and self.initial.kind == "kernel":
            raise ValueError("Dirichlet runs take indicator or first-mode data")
        if self.mode == "verify":
            unknown = sorted(set(self.verify.checks) - set(SUITE_CHECKS))
            if unknown:
                raise ValueError(f"unknown verification checks {unknown}")
        return self

    def out_dir(self) -> Path:
        return Path(self.output_dir or Path(settings.output_dir) / self.mode)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _locate(text: str, loc) -> str:
    """'line L' of the first occurrence of the innermost string key of `loc`, if any."""
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return ""
    needle = f'"{keys[-1]}"'
    for number, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f" (line {number})"
    return ""


def parse_config(text: str, source: str = "<config>", **overrides) -> ExperimentConfig:
    """
    Validate a JSON document, applying CLI overrides (mode, output_dir, seed, jobs) first.

    Raises:
        ConfigError: JSON syntax errors with line and column, schema violations with the field path.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    mode = overrides.pop("mode", None)
    if mode is not None:
        if raw.get("mode", mode) != mode:
            raise ConfigError(f"config says {raw['mode']!r} but {mode!r} was requested", path="mode")
        raw["mode"] = mode
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{first['msg']}{_locate(text, first['loc'])} in {source}", path=path) from e


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse_config(text, source=str(path), **overrides)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_profile(params: ModelParams, cache: Optional[ArtifactCache] = None) -> KernelProfile:
    return (cache or ArtifactCache()).kernel_profile(params)


def build_solve_config(config: ExperimentConfig, profile: KernelProfile) -> SolveConfig:
    mesh = config.mesh.build()
    half_width = config.grid.half_width or suggest_half_width(profile, mesh.horizon)
    grid = SpaceGrid.with_spacing(half_width, config.grid.dx)
    initial = config.initial
    if initial.kind == "indicator":
        values = initial.amplitude * grid.indicator(initial.a, initial.b)
    elif initial.kind == "kernel":
        values = initial.amplitude * heat_kernel(profile, initial.gamma, grid.x)
    elif initial.kind == "zero":
        values = np.zeros(grid.points)
    else:
        raise ConfigError("first-mode data only exist for Dirichlet runs", path="initial.kind")
    decay = None
    if config.decay is not None:
        decay = DecayTest(gamma=config.decay.gamma, delta=config.decay.delta)
    elif initial.kind == "kernel" and initial.amplitude > 0:
        decay = DecayTest(gamma=initial.gamma, delta=initial.amplitude)
    th = config.thresholds
    return SolveConfig(profile=profile, grid=grid, mesh=mesh, v0=Field(grid=grid, values=values),
                       blowup_threshold=th.blowup_threshold, picard_tol=th.picard_tol,
                       picard_max_iters=th.picard_max_iters, decay_test=decay, nonlinear=th.nonlinear,
                       confirm_refinement=th.confirm_refinement, step_control=th.step_control)


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

def run_kernel(config: ExperimentConfig) -> dict:
    params = config.params
    out = config.out_dir()
    profile = build_profile(params)
    header = {"config": config.resolved(), "near_origin": profile.near_origin,
              "near_coeffs": list(profile.near_coeffs), "tail_constant": profile.tail_constant,
              "panels": profile.panels, "build_info": profile.build_info}
    write_csv(out / "profile.csv", {"z": profile.grid, "phi": profile.values}, header)
    summary = {"origin_value": profile.origin_value, "tail_constant": profile.tail_constant,
               "near_origin": profile.near_origin, "mass": profile_mass(profile), "panels": profile.panels}
    if params.dim == 1 and params.alpha not in (1.0, 2.0):
        table = stable_profile(params.alpha).table()
        write_csv(out / "stable.csv", {"x": table[:, 0], "p1_of_x": table[:, 1]},
                  {"alpha": params.alpha, "dim": params.dim})
    write_json(out / "kernel.json", {"config": config.resolved(), "summary": summary})
    logger.info(f"Kernel profile written to {out}")
    return summary


def _solve(config: ExperimentConfig, profile: KernelProfile, out: Path, stem: str = "trace") -> dict:
    solve_config = build_solve_config(config, profile)
    if config.solve.method == "picard":
        trace = picard_trace(solve_config, delta=config.solve.small_data_delta)
    else:
        trace = march(solve_config)
    header = {"config": config.resolved(), "solver": solve_config.describe(), "summary": trace.summary()}
    write_csv(out / f"{stem}.csv", trace.columns(), header)
    finite = [i for i, s in enumerate(trace.states) if np.all(np.isfinite(s))]
    last = finite[-1]
    snapshot = Field(grid=solve_config.grid, values=trace.states[last], time_stamp=float(trace.times[last]))
    write_field(out / f"{stem}-final.csv", snapshot, {"config": config.resolved()})
    return trace.summary()


def run_solve(config: ExperimentConfig) -> dict:
    profile = build_profile(config.params)
    summary = _solve(config, profile, config.out_dir())
    write_json(config.out_dir() / "summary.json", {"config": config.resolved(), "summary": summary})
    return summary


@taskify
def sweep_row(config: ExperimentConfig, profile: KernelProfile, eta: float) -> dict:
    """
    Solve one row of an eta sweep.

    Args:
        config (ExperimentConfig): the sweep configuration.
        profile (KernelProfile): kernel shared by all rows (eta does not enter it).
        eta (float): exponent of this row.

    Returns:
        dict: the summary row; hard failures are recorded in the 'error' column.
    """
    params = config.params.with_eta(eta)
    row_config = config.model_copy(update={"params": params})
    row = {"eta": eta, "eta_c": params.eta_c, "flag": "critical: not certified" if is_critical(params) else ""}
    try:
        summary = _solve(row_config, profile.with_params(params), config.out_dir(), stem=f"trace-eta-{eta:g}")
    except FracError as e:
        logger.exception(f"sweep row eta={eta} failed")
        row.update(verdict="error", error=f"{type(e).__name__}: {e}")
        return row
    row.update(verdict=summary["verdict"], blowup_time=summary["blowup_time"], uncertainty=summary["uncertainty"],
               max_weighted_ratio=summary["max_weighted_ratio"], error="")
    if summary["verdict"] == CRITICAL:
        row["flag"] = "critical: not certified"
    elif summary["verdict"] == GLOBAL and eta < params.eta_c:
        row["flag"] = SUBCRITICAL_FLAG
    return row


def run_sweep(config: ExperimentConfig) -> List[dict]:
    """One row per eta, in the order of the configuration."""
    etas = config.sweep.values()
    profile = build_profile(config.params)
    jobs = config.jobs or settings.jobs
    logger.info(f"Sweeping {len(etas)} exponents with {jobs} workers (eta_c = {config.params.eta_c:.6g})")
    rows = []
    with TaskRunner(max_workers=jobs) as runner:
        tids = [runner.schedule(sweep_row(config, profile, eta)) for eta in etas]
        for eta, tid in tqdm(zip(etas, tids), total=len(tids), desc="sweep"):
            try:
                rows.append(runner.get_result(tid))
            except Exception as e:
                logger.exception(f"sweep row eta={eta} raised")
                rows.append({"eta": eta, "eta_c": config.params.eta_c, "verdict": "error", "error": repr(e)})
    write_rows(config.out_dir() / "sweep.csv", rows, SWEEP_FIELDS, {"config": config.resolved()})
    return rows


def run_dirichlet(config: ExperimentConfig) -> List[dict]:
    """One modal run per amplitude K; v0 = K phi_1 or K times the indicator."""
    params = config.params
    block = config.dirichlet
    basis = ArtifactCache().spectral_basis(params.alpha, block.radius, block.n_grid, block.n_modes)
    grid = basis.grid
    if config.initial.kind == "indicator":
        shape = grid.indicator(config.initial.a, config.initial.b)
        shape[[0, -1]] = 0.0
    elif config.initial.kind == "zero":
        shape = np.zeros(grid.points)
    else:
        first = np.zeros(basis.count)
        first[0] = 1.0
        shape = np.maximum(basis.synthesize(first), 0.0)
    th = config.thresholds
    out = config.out_dir()
    rows = []
    for K in block.amplitudes:
        dconfig = DirichletConfig(basis=basis, params=params, v0=Field(grid=grid, values=K * shape),
                                  mesh=config.mesh.build(), blowup_threshold=th.blowup_threshold,
                                  nonlinear=th.nonlinear, confirm_refinement=th.confirm_refinement,
                                  step_control=th.step_control)
        trace = dirichlet_march(dconfig)
        summary = trace.summary()
        header = {"config": config.resolved(), "solver": dconfig.describe(), "summary": summary, "K": K}
        write_csv(out / f"dirichlet-K-{K:g}.csv", trace.columns(), header)
        ode = ode_blowup_time(params.beta, params.eta, K) if K > 0 else None
        rows.append({"K": K, "verdict": summary["verdict"], "blowup_time": summary["blowup_time"],
                     "uncertainty": summary["uncertainty"], "ode_blowup_time": ode,
                     "nu_1": float(basis.eigenvalues[0]), "approximate": basis.approximate})
    write_rows(out / "dirichlet.csv", rows,
               ["K", "verdict", "blowup_time", "uncertainty", "ode_blowup_time", "nu_1", "approximate"],
               {"config": config.resolved()})
    return rows


def run_verify(config: ExperimentConfig) -> dict:
    profile = build_profile(config.params)
    return run_suite(profile, out_dir=config.out_dir(), checks=config.verify.checks, seed=config.seed,
                     samples=config.verify.samples, jobs=config.jobs)


RUNNERS = {"kernel": run_kernel, "solve": run_solve, "dirichlet": run_dirichlet, "sweep": run_sweep,
           "verify": run_verify}


def run(config: ExperimentConfig):
    """Execute the configured mode and return its result (summary dict, rows or roll-up)."""
    logger.info(f"Running mode {config.mode} for {config.params.summary()}")
    return RUNNERS[config.mode](config)
