from typing import List

from pydantic import BaseModel, Field


class BenchRecord(BaseModel):
    """Phase timings of one sweep benchmark case."""
    case_id: str
    grid_id: str
    n: int
    rho: float
    reduced_dim: int
    n_betas: int
    assembly_time: float = Field(gt=0.0)
    factorization_time: float = Field(gt=0.0)
    cached_solve_time: float = Field(gt=0.0, description="Mean per-beta solve with the shared Schur form")
    naive_solve_time: float = Field(gt=0.0, description="Mean per-beta solve with a fresh LU factorization")
    peak_memory_bytes: int = Field(ge=0)
    
    @property
    def speedup(self) -> float:
        return self.naive_solve_time / self.cached_solve_time


class BenchReport(BaseModel):
    records: List[BenchRecord]
    assembly_ratio: float  # largest over smallest grid
