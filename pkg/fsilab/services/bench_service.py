import logging
import time
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from ..models.bench import BenchRecord, BenchReport
from ..models.generator import Generator
from ..models.geometry import GeometryConfig
from .generator import GeneratorService

logger = logging.getLogger(__name__)

POWER_ITERATIONS = 30


def generator_nbytes(gen: Generator) -> int:
    """Bytes held by the dense and sparse arrays of an assembled generator."""
    total = 0
    for item in (gen.a_red, gen.basis, gen.metric_red, gen.coord_mass, gen.lift, gen.forcing, gen.constraints):
        if isinstance(item, np.ndarray):
            total += item.nbytes
        elif hasattr(item, "data"):
            total += item.data.nbytes + getattr(item, "indices", np.empty(0)).nbytes + getattr(item, "indptr", np.empty(0)).nbytes
    return int(total)


def _inverse_power(solve, x0: np.ndarray, iterations: int) -> float:
    """sigma_min of S from power iteration on (S^H S)^-1; solve(x, adjoint) applies S^-1 or S^-H."""
    x = x0.astype(complex)
    top = 0.0
    for _ in range(iterations):
        y = solve(solve(x, False), True)
        top = float(np.linalg.norm(y))
        x = y / top
    return 1.0 / np.sqrt(top)


class BenchService:
    """Timing of generator assembly and of the per-beta resolvent solves."""

    def cached_sweep(self, gen: Generator, betas: Sequence[float], iterations: int = POWER_ITERATIONS):
        """Resolvent sigma_min with one complex Schur form shared by every beta."""
        start = time.perf_counter()
        t, z = sla.schur(gen.a_red.astype(complex), output="complex")
        factor_time = time.perf_counter() - start
        eye = np.eye(gen.dim)
        # same start vector as the naive path, in Schur coordinates
        x0 = z.conj().T @ (np.ones(gen.dim) / np.sqrt(gen.dim))

        start = time.perf_counter()
        sigmas = []
        for beta in betas:
            shifted = 1j * beta * eye - t

            def solve(x, adjoint):
                if adjoint:
                    return sla.solve_triangular(shifted, x, trans="C")
                return sla.solve_triangular(shifted, x)

            sigmas.append(_inverse_power(solve, x0, iterations))
        return np.array(sigmas), factor_time, (time.perf_counter() - start) / len(betas)

    def naive_sweep(self, gen: Generator, betas: Sequence[float], iterations: int = POWER_ITERATIONS):
        """Same sigma_min with a fresh LU factorization at every beta."""
        eye = np.eye(gen.dim)
        x0 = np.ones(gen.dim) / np.sqrt(gen.dim)
        start = time.perf_counter()
        sigmas = []
        for beta in betas:
            lu = sla.lu_factor(1j * beta * eye - gen.a_red)

            def solve(x, adjoint):
                return sla.lu_solve(lu, x, trans=2 if adjoint else 0)

            sigmas.append(_inverse_power(solve, x0, iterations))
        return np.array(sigmas), (time.perf_counter() - start) / len(betas)

    def bench_case(self, geometry: GeometryConfig, rho: float, betas: Sequence[float]) -> BenchRecord:
        """Assembly, factorization and per-beta solve timings on a fresh (uncached) generator."""
        start = time.perf_counter()
        gen = GeneratorService().build(geometry, rho)
        assembly_time = time.perf_counter() - start

        cached, factor_time, cached_time = self.cached_sweep(gen, betas)
        naive, naive_time = self.naive_sweep(gen, betas)
        gap = float(np.max(np.abs(cached - naive) / naive))
        if gap > 1e-6:
            logger.warning(f"Cached and naive sigma_min disagree by {gap:.2e} on {gen.grid_id}")

        record = BenchRecord(
            case_id=f"{gen.grid_id}-rho{rho:g}",
            grid_id=gen.grid_id,
            n=geometry.n,
            rho=rho,
            reduced_dim=gen.dim,
            n_betas=len(betas),
            assembly_time=assembly_time,
            factorization_time=factor_time,
            cached_solve_time=cached_time,
            naive_solve_time=naive_time,
            peak_memory_bytes=generator_nbytes(gen),
        )
        logger.info(
            f"Bench {record.case_id}: assembly {assembly_time:.3f}s, per-beta {cached_time * 1e3:.3f}ms cached "
            f"vs {naive_time * 1e3:.3f}ms naive"
        )
        return record

    def bench_sweep(
        self,
        geometries: Sequence[GeometryConfig],
        rho: float,
        betas: Optional[Sequence[float]] = None,
    ) -> BenchReport:
        """Bench at two or more grid sizes."""
        if len(geometries) < 2:
            raise ValueError("Sweep benchmark needs at least two grid sizes")
        betas = list(betas) if betas is not None else list(np.linspace(0.0, 10.0, 20))
        records: List[BenchRecord] = [self.bench_case(g, rho, betas) for g in geometries]
        ordered = sorted(records, key=lambda r: r.n)
        return BenchReport(records=records, assembly_ratio=ordered[-1].assembly_time / ordered[0].assembly_time)
