import asyncio
import csv
import json
import logging
import platform
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .. import __version__
from ..config import settings
from ..exceptions import NumericalError
from ..models.control import ControlKind, ControlReport
from ..models.generator import Generator
from ..models.run import RunManifest, RunStatus
from ..models.run_config import ExperimentKind, OutputFormat, RunConfig
from .generator import GeneratorService
from .lqr_control import ControlService
from .matrix_io import write_coordinate_matrix
from .parallel import gather_ordered
from .run_service import RunService
from .semigroup_sim import SimulationService
from .spectral_analysis import SpectralService
from .stationary_resolvent import ResolventService

logger = logging.getLogger(__name__)

VALIDATE_SAMPLES = 20
DUMP_TARGETS = ("generator", "metric", "basis")


class RunContext(BaseModel):
    """State shared by the phases of one run."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    run_id: str
    run_dir: Path
    config: RunConfig
    seed: int
    gen: Optional[Generator] = None
    rng: Any = None
    summary: Dict[str, Any] = {}

    def wants(self, fmt: OutputFormat) -> bool:
        return fmt in self.config.output.formats


class ExperimentService:
    """Runs configured experiments and writes their artifacts and manifest."""

    def __init__(
        self,
        run_service: Optional[RunService] = None,
        generator_service: Optional[GeneratorService] = None,
    ):
        self.run_service = run_service or RunService()
        self.generator_service = generator_service or GeneratorService()
        self.resolvent_service = ResolventService(self.generator_service)
        self.simulation_service = SimulationService(self.generator_service)
        self.control_service = ControlService(self.generator_service, self.resolvent_service)
        self._experiment_registry = self._build_experiment_registry()

    def _build_experiment_registry(self) -> Dict[ExperimentKind, Dict[str, Any]]:
        """Handler, artifacts and description of each experiment kind."""
        return {
            ExperimentKind.SIMULATE: {
                "handler": self._run_simulate,
                "artifacts": ["trajectory.csv", "trajectory.json", "decay_fit.json"],
                "description": "Energy-preserving time integration with energy balance and decay fit",
            },
            ExperimentKind.SPECTRUM: {
                "handler": self._run_spectrum,
                "artifacts": ["eigenvalues.csv", "spectrum.json"],
                "description": "Eigenvalues of the reduced generator and the spectral abscissa",
            },
            ExperimentKind.SWEEP: {
                "handler": self._run_sweep,
                "artifacts": ["resolvent_sweep.csv", "sweep.json"],
                "description": "Resolvent norm on the imaginary axis, its supremum and the decay certificate",
            },
            ExperimentKind.INVERT: {
                "handler": self._run_invert,
                "artifacts": ["resolvent_diagnostics.csv", "invert.json"],
                "description": "Constructive inverse at zero and resolvent solves with identity diagnostics",
            },
            ExperimentKind.LQR: {
                "handler": self._run_lqr,
                "artifacts": ["control.json", "costs.csv", "p_trace.csv"],
                "description": "Point or boundary control with Riccati feedback synthesis",
            },
            ExperimentKind.VALIDATE: {
                "handler": self._run_validate,
                "artifacts": ["validate.json"],
                "description": "Invariant suite: dissipativity, projection, Robin constants, zero inverse",
            },
        }

    def list_experiments(self) -> List[Dict[str, Any]]:
        return [
            {"kind": kind.value, "artifacts": info["artifacts"], "description": info["description"]}
            for kind, info in self._experiment_registry.items()
        ]

    def health_check(self) -> Dict[str, str]:
        """Library versions recorded in every manifest."""
        import pydantic
        import pydantic_settings
        import scipy

        return {
            "fsilab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
            "pydantic_settings": pydantic_settings.__version__,
        }

    def resolve_output_dir(self, config: RunConfig) -> Path:
        """FSILAB_OUTPUT_DIR wins over the config's output.directory."""
        if "output_dir" in settings.model_fields_set or config.output.directory is None:
            return Path(settings.output_dir)
        return Path(config.output.directory)

    async def execute(self, config: RunConfig, kind: Optional[ExperimentKind] = None) -> RunManifest:
        """Run one experiment end to end."""
        kind = kind or config.experiment.kind
        if kind not in self._experiment_registry:
            raise ValueError(f"Unknown experiment: {kind}")
        handler = self._experiment_registry[kind]["handler"]
        return await self._execute(config, kind.value, handler)

    async def dump(self, config: RunConfig, target: str) -> RunManifest:
        """Write one matrix of the assembled generator in coordinate format."""
        if target not in DUMP_TARGETS:
            raise ValueError(f"Unknown dump target {target!r}; expected one of {', '.join(DUMP_TARGETS)}")

        async def handler(ctx: RunContext) -> None:
            gen = ctx.gen
            matrix = {"generator": gen.a_red, "metric": gen.coord_mass, "basis": gen.basis}[target]
            name = f"{target}.txt"
            nnz = write_coordinate_matrix(ctx.run_dir / name, matrix)
            await self._register(ctx, name)
            ctx.summary.update({"target": target, "shape": list(matrix.shape), "nnz": nnz})

        return await self._execute(config, f"dump-{target}", handler)

    async def _execute(self, config: RunConfig, name: str, handler: Callable) -> RunManifest:
        runs = self.run_service
        run_id = await runs.create_run(name)
        run_dir = self.resolve_output_dir(config) / run_id
        run_dir.mkdir(parents=True, exist_ok=False)

        seed = config.experiment.seed
        ctx = RunContext(
            run_id=run_id,
            run_dir=run_dir,
            config=config,
            seed=seed,
            rng=np.random.default_rng(seed),
        )
        geometry = config.geometry.to_geometry()
        rho = config.physics.rho
        logger.info(f"Run {run_id}: {name} on {geometry.dim_mode.value} n={geometry.n}, rho={rho}, seed={seed}")

        await runs.update_run_status(run_id, RunStatus.RUNNING)
        error: Optional[BaseException] = None
        try:
            ctx.gen = await self._timed(ctx, "assembly", self.generator_service.build, geometry, rho)
            await handler(ctx)
            await runs.complete_run(run_id)
        except Exception as e:
            error = e
            logger.error(f"Run {run_id} failed: {e}")
            await runs.fail_run(run_id, f"{type(e).__name__}: {e}")

        grid_id = ctx.gen.grid_id if ctx.gen is not None else f"{geometry.dim_mode.value}-n{geometry.n}"
        manifest = await runs.build_manifest(
            run_id,
            run_dir,
            seed=seed,
            grid_id=grid_id,
            rho=rho,
            config=config.model_dump(mode="json"),
            versions=self.health_check(),
            summary=ctx.summary,
        )
        (run_dir / "manifest.json").write_text(manifest.model_dump_json(indent=2))
        if error is not None:
            raise error
        logger.info(f"Run {run_id} completed: {len(manifest.artifacts)} artifacts in {run_dir}")
        return manifest

    async def _timed(self, ctx: RunContext, phase: str, fn: Callable, *args, **kwargs) -> Any:
        """Run fn in a worker thread and charge its wall time to phase."""
        start = time.perf_counter()
        try:
            return await asyncio.to_thread(fn, *args, **kwargs)
        finally:
            await self.run_service.record_timing(ctx.run_id, phase, time.perf_counter() - start)

    # Artifact writers, called from the orchestrating coroutine only

    async def _register(self, ctx: RunContext, name: str) -> None:
        await self.run_service.add_artifact(ctx.run_id, name)

    def _write_json(self, ctx: RunContext, name: str, payload: Any) -> Optional[str]:
        if not ctx.wants(OutputFormat.JSON):
            return None
        path = ctx.run_dir / name
        if isinstance(payload, BaseModel):
            path.write_text(payload.model_dump_json(indent=2))
        else:
            path.write_text(json.dumps(payload, indent=2, default=float))
        return name

    def _write_csv(self, ctx: RunContext, name: str, fieldnames: Sequence[str], rows: Sequence[Dict[str, Any]]) -> Optional[str]:
        if not ctx.wants(OutputFormat.CSV):
            return None
        with open(ctx.run_dir / name, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(fieldnames))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return name

    async def _flush(self, ctx: RunContext, *names: Optional[str]) -> None:
        """Register written artifacts; None marks a skipped format."""
        for name in names:
            if name is not None:
                await self._register(ctx, name)

    # Experiments

    async def _run_simulate(self, ctx: RunContext) -> None:
        exp = ctx.config.experiment
        gen = ctx.gen
        sim = self.simulation_service
        y0 = self.generator_service.random_state(gen, ctx.rng)
        record = await self._timed(
            ctx,
            "simulate",
            sim.simulate,
            gen,
            y0,
            exp.t_final,
            dt=exp.dt,
            snapshot_every=exp.snapshot_every,
            method=exp.method,
            formulation=exp.formulation,
        )
        fit = None
        try:
            fit = sim.fit_decay(record, exp.fit_mode, tuple(exp.fit_window))
        except NumericalError as e:
            logger.warning(f"Decay fit skipped: {e}")
            await self.run_service.add_warning(ctx.run_id, str(e))
        cross = await self._timed(ctx, "pressure_check", sim.pressure_cross_check, gen, y0, record.dt)

        rows = [
            {"t": t, "energy": e, "dissipated": d, "energy_plus_dissipated": e + d, "mean_w1": m}
            for t, e, d, m in zip(record.times, record.energies, record.dissipation, record.mean_w1)
        ]
        ctx.summary.update(
            {
                "steps": len(record.times) - 1,
                "dt": record.dt,
                "energy_balance_gap": record.energy_balance_gap,
                "mean_drift": record.mean_drift,
                "omega_fit": fit.omega_fit if fit else None,
                "r_squared": fit.r_squared if fit else None,
                **cross,
            }
        )
        await self._flush(
            ctx,
            self._write_csv(ctx, "trajectory.csv", list(rows[0].keys()), rows),
            self._write_json(ctx, "trajectory.json", {**record.model_dump(mode="json"), "pressure_cross_check": cross}),
            self._write_json(ctx, "decay_fit.json", fit) if fit else None,
        )

    async def _run_spectrum(self, ctx: RunContext) -> None:
        gen = ctx.gen
        spectral = SpectralService(ctx.config.experiment.dense_threshold)
        report = await self._timed(ctx, "spectrum", spectral.compute_spectrum, gen, ctx.config.experiment.eigen_k)
        if report.abscissa is not None and report.abscissa < 0 and ctx.config.experiment.certify:
            cert = await self._timed(ctx, "certificate", spectral.decay_certificate, gen, report.abscissa)
            report = report.model_copy(update={"certificate": cert})
        vals = report.eigenvalues()
        rows = [
            {"index": i, "real": float(v.real), "imag": float(v.imag), "residual": r}
            for i, (v, r) in enumerate(zip(vals, report.eigen_residuals))
        ]
        ctx.summary.update({"abscissa": report.abscissa, "reduced_dim": report.reduced_dim, "method": report.method})
        await self._flush(
            ctx,
            self._write_csv(ctx, "eigenvalues.csv", ["index", "real", "imag", "residual"], rows),
            self._write_json(ctx, "spectrum.json", report),
        )

    async def _run_sweep(self, ctx: RunContext) -> None:
        exp = ctx.config.experiment
        betas = np.asarray(exp.betas, dtype=float) if exp.betas else None
        report = await self._timed(
            ctx,
            "sweep",
            SpectralService(exp.dense_threshold).sweep_and_certify,
            ctx.gen,
            betas=betas,
            beta_max=exp.beta_max,
            refine=exp.refine,
            certify=exp.certify,
            max_workers=settings.max_workers,
        )
        if report.boundary_warning:
            await self.run_service.add_warning(ctx.run_id, "resolvent sweep maximum on the beta grid boundary")
        rows = [{"beta": s.beta, "resolvent_norm": s.resolvent_norm} for s in report.samples]
        ctx.summary.update(
            {
                "abscissa": report.abscissa,
                "c_sup": report.c_sup,
                "beta_star": report.beta_star,
                "boundary_warning": report.boundary_warning,
                "tail_deviation": report.tail_deviation,
            }
        )
        await self._flush(
            ctx,
            self._write_csv(ctx, "resolvent_sweep.csv", ["beta", "resolvent_norm"], rows),
            self._write_json(ctx, "sweep.json", report),
        )

    async def _run_invert(self, ctx: RunContext) -> None:
        exp = ctx.config.experiment
        gen = ctx.gen
        rs = self.resolvent_service
        proj = rs.projection_for(gen)
        data = [self.generator_service.random_state(gen, ctx.rng, complex_valued=True) for _ in range(exp.samples)]
        cases = [(k, float(beta)) for k in range(exp.samples) for beta in exp.invert_betas]

        def solve(case):
            k, beta = case
            if beta == 0.0:
                sol = rs.invert_at_zero(gen, proj, data[k])
            else:
                sol = rs.solve_resolvent(gen, beta, data[k])
            lift = rs.auxiliary_lift_diagnostic(gen, sol)
            row = {"sample": k, "method": sol.method, **rs.diagnostics_row(sol, lift)}
            row["face_trace_gap"] = sol.diagnostics.face_trace_gap
            row["pressure_gap"] = sol.diagnostics.pressure_gap if sol.diagnostics.pressure_gap is not None else float("nan")
            row["passed"] = sol.diagnostics.passed
            return row

        start = time.perf_counter()
        rows = await gather_ordered(solve, cases, settings.max_workers)
        await self.run_service.record_timing(ctx.run_id, "invert", time.perf_counter() - start)

        summary = self._calculate_summary(
            rows, ["residual", "dissipation_gap", "trace_gap", "face_trace_gap", "pressure_gap", "lift_gap"]
        )
        ctx.summary.update(summary)
        fields = ["sample", "beta", "method", "residual", "dissipation_gap", "trace_gap", "face_trace_gap", "pressure_gap", "lift_gap", "passed"]
        await self._flush(
            ctx,
            self._write_csv(ctx, "resolvent_diagnostics.csv", fields, rows),
            self._write_json(ctx, "invert.json", summary),
        )
        if summary["failed"]:
            raise NumericalError(f"{summary['failed']} of {summary['total']} resolvent solves failed their residual check", summary)

    async def _run_lqr(self, ctx: RunContext) -> None:
        control = ctx.config.experiment.control
        gen = ctx.gen
        cs = self.control_service

        if control.kind == ControlKind.POINT_PLATE:
            setup = cs.build_point_control(gen, control.locations, control.weights, control.observation)
        else:
            faces = control.sigma_faces if control.sigma_faces is not None else cs.default_patch(gen)
            setup = cs.build_boundary_control(gen, faces, control.policy, control.observation)
        rank = cs.krylov_rank(gen, setup)
        sol = await self._timed(ctx, "riccati", cs.solve_lqr, gen, setup, control.horizon)

        costs = []
        if control.horizon is None:
            dt = self.simulation_service.default_dt(gen)
            for k in range(control.cost_samples):
                z0 = ctx.rng.standard_normal(gen.dim)
                row = {"sample": k, **cs.quadratic_costs(gen, setup, sol, z0)}
                row["simulated_closed_loop"] = cs.simulate_cost(gen, setup, sol.gain, z0, control.cost_time, dt)
                row["simulated_open_loop"] = cs.simulate_cost(gen, setup, None, z0, control.cost_time, dt)
                costs.append(row)

        table = []
        if control.gain_grids and control.kind == ControlKind.POINT_PLATE:
            geometries = [
                ctx.config.geometry.model_copy(update={"n": n}).to_geometry() for n in control.gain_grids
            ]
            table = await self._timed(
                ctx, "gain_table", cs.gain_table, geometries, gen.rho, control.locations, control.weights
            )

        report = ControlReport(
            kind=setup.kind,
            grid_id=gen.grid_id,
            rho=gen.rho,
            reduced_dim=gen.dim,
            horizon=sol.horizon,
            are_residual=sol.residual,
            residual_history=sol.residual_history,
            open_abscissa=sol.open_abscissa,
            closed_abscissa=sol.closed_abscissa,
            gain_norm=float(np.linalg.norm(sol.gain, 2)),
            krylov_rank=rank,
            flux=setup.flux,
            costs=costs,
            gain_table=table,
        )
        ctx.summary.update(
            {
                "are_residual": report.are_residual,
                "open_abscissa": report.open_abscissa,
                "closed_abscissa": report.closed_abscissa,
                "gain_norm": report.gain_norm,
                "krylov_rank": rank,
            }
        )
        trace_rows = [{"t": t, "trace_p": v} for t, v in zip(sol.trace_times, sol.trace_values)]
        cost_fields = ["sample", "closed_loop", "open_loop", "simulated_closed_loop", "simulated_open_loop"]
        await self._flush(
            ctx,
            self._write_json(ctx, "control.json", report),
            self._write_csv(ctx, "costs.csv", cost_fields, costs) if costs else None,
            self._write_csv(ctx, "p_trace.csv", ["t", "trace_p"], trace_rows) if trace_rows else None,
        )

    async def _run_validate(self, ctx: RunContext) -> None:
        checks = await self._timed(ctx, "validate", self.validate_checks, ctx.gen, ctx.seed)
        summary = self._calculate_summary(checks, ["value"])
        ctx.summary.update(summary)
        await self._flush(ctx, self._write_json(ctx, "validate.json", {"checks": checks, **summary}))
        if summary["failed"]:
            failed = [c["name"] for c in checks if not c["passed"]]
            raise NumericalError(f"Invariant checks failed: {', '.join(failed)}", {"failed_checks": failed})

    def validate_checks(self, gen: Generator, seed: int) -> List[Dict[str, Any]]:
        """Dimension, plate pairing, dissipativity, projection, Robin solutions, zero inverse and mean drift."""
        gs = self.generator_service
        ps = gs.pressure_service
        rs = self.resolvent_service
        rng = np.random.default_rng(seed)
        checks = []

        def check(name: str, value: float, tolerance: float) -> None:
            passed = bool(value <= tolerance)
            checks.append({"name": name, "value": float(value), "tolerance": tolerance, "passed": passed})
            log = logger.info if passed else logger.warning
            log(f"Check {name}: {value:.3e} (tolerance {tolerance:.0e}) {'ok' if passed else 'FAILED'}")

        check("reduced_dimension", abs(gen.dim - gs.expected_reduced_dim(gen.ops.topology)), 0)
        t = gen.ops.plate.to_faces.toarray()
        check("plate_pairing", float(np.max(np.abs(t.T @ t - np.eye(gen.n_plate)))), 0.0)
        check("dissipativity", gs.check_dissipativity(gen, samples=100, seed=seed), 1e-8)

        proj = rs.projection_for(gen)
        worst = 0.0
        for _ in range(VALIDATE_SAMPLES):
            pw = proj.apply(rng.standard_normal(gen.n_plate))
            worst = max(worst, np.linalg.norm(proj.apply(pw) - pw) / max(np.linalg.norm(pw), 1e-300))
        check("projection_idempotence", worst, 1e-12)

        # f = c solves the Robin problem with Omega data c P^-1 T^T 1
        plate = gen.ops.plate
        ones = np.ones(gen.ops.topology.n_omega)
        g = ps.inertia_solve(gen.maps, plate.to_faces.T @ ones)
        f = ps.robin_solve(gen.maps.robin, g_on_omega=g)
        check("robin_constant", float(np.max(np.abs(f - 1.0))), 1e-10)
        check("robin_zero", float(np.max(np.abs(ps.robin_solve(gen.maps.robin)), initial=0.0)), 0.0)

        worst_res, worst_p = 0.0, 0.0
        for _ in range(VALIDATE_SAMPLES):
            sol = rs.invert_at_zero(gen, proj, gs.random_state(gen, rng))
            worst_res = max(worst_res, sol.diagnostics.residual)
            worst_p = max(worst_p, sol.diagnostics.pressure_gap or 0.0)
        check("zero_inverse_residual", worst_res, 1e-8)
        check("zero_inverse_pressure", worst_p, 1e-8)

        drift = self.simulation_service.simulate(gen, gs.random_state(gen, rng), t_final=0.25).mean_drift
        check("interface_mean_drift", drift, 1e-12)
        return checks

    def _calculate_summary(self, rows: List[Dict[str, Any]], fields: Sequence[str]) -> Dict[str, Any]:
        """Pass counts and worst values per field."""
        total = len(rows)
        passed = sum(1 for row in rows if row.get("passed"))
        summary: Dict[str, Any] = {
            "total": total,
            "passed": passed,
            "failed": total - passed,
            "pass_rate": passed / total if total > 0 else 0.0,
        }
        for field in fields:
            values = [row[field] for row in rows if field in row and np.isfinite(row[field])]
            summary[f"max_{field}"] = max(values) if values else None
        return summary
