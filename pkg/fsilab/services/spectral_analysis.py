import logging
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from ..exceptions import NumericalError
from ..models.generator import Generator
from ..models.run_config import DENSE_THRESHOLD
from ..models.spectral import SpectralReport, SweepSample, DecayCertificate
from .parallel import run_ordered

logger = logging.getLogger(__name__)

SPECTRUM_TOL = 1e-12
LINEAR_POINTS = 100
LOG_POINTS = 100
LINEAR_END = 10.0
TAIL_FACTOR = 20.0


class SpectralService:
    """Service for the spectrum, resolvent-norm sweep and decay certificate."""
    
    def __init__(self, dense_threshold: int = DENSE_THRESHOLD):
        self.dense_threshold = dense_threshold
    
    def compute_spectrum(self, gen: Generator, k: Union[int, str] = "all") -> SpectralReport:
        """Eigenvalues of the pencil (A_red, M_red) with their residuals."""
        a = gen.a_red
        if k == "all" and gen.dim <= self.dense_threshold:
            vals, vecs = sla.eig(a, gen.metric_red)
            method = "dense"
        else:
            count = gen.dim - 2 if k == "all" else int(k)
            count = max(1, min(count, gen.dim - 2))
            try:
                vals, vecs = spla.eigs(a, k=count, M=None, which="LR")
            except spla.ArpackNoConvergence as e:
                raise NumericalError(
                    f"Rightmost eigenvalues did not converge ({len(e.eigenvalues)} of {count})",
                    {"converged": len(e.eigenvalues), "requested": count},
                )
            method = "arnoldi"
        
        order = np.argsort(-vals.real)
        vals, vecs = vals[order], vecs[:, order]
        residuals = np.linalg.norm(a @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
        report = SpectralReport(
            grid_id=gen.grid_id,
            rho=gen.rho,
            reduced_dim=gen.dim,
            method=method,
            eigenvalues_real=vals.real.tolist(),
            eigenvalues_imag=vals.imag.tolist(),
            eigen_residuals=residuals.tolist(),
            abscissa=float(vals.real.max()),
        )
        logger.info(f"Spectrum of {gen.grid_id}, rho={gen.rho}: abscissa {report.abscissa:.6e} ({method})")
        return report
    
    def slowest_mode(self, gen: Generator) -> np.ndarray:
        """Reduced eigenvector of the eigenvalue with the largest real part, unit M-norm."""
        vals, vecs = sla.eig(gen.a_red)
        v = vecs[:, np.argmax(vals.real)]
        return v / np.linalg.norm(v)
    
    def operator_norm(self, gen: Generator) -> float:
        return float(np.linalg.norm(gen.a_red, 2))
    
    def resolvent_norm(self, gen: Generator, beta: float, method: str = "auto") -> float:
        """||(i beta - A_red)^-1|| in the energy geometry (M_red = I), as 1/sigma_min."""
        shifted = 1j * beta * np.eye(gen.dim) - gen.a_red
        if method == "auto":
            method = "dense" if gen.dim <= self.dense_threshold else "inverse"
        
        if method == "dense":
            sigma_min = float(sla.svdvals(shifted)[-1])
        elif method == "inverse":
            sigma_min = self._sigma_min_inverse(shifted)
        else:
            raise ValueError(f"Unknown resolvent norm method: {method}")
        
        if sigma_min < SPECTRUM_TOL:
            eigs = np.linalg.eigvals(gen.a_red)
            nearest = eigs[np.argmin(np.abs(eigs - 1j * beta))]
            raise NumericalError(
                f"i*{beta} lies within {sigma_min:.1e} of the spectrum (eigenvalue {nearest:.6e})",
                {"beta": beta, "nearest_real": float(nearest.real), "nearest_imag": float(nearest.imag)},
            )
        return 1.0 / sigma_min
    
    def _sigma_min_inverse(self, shifted: np.ndarray) -> float:
        """Smallest singular value by Lanczos on S^-1 S^-H with one shifted LU."""
        lu = sla.lu_factor(shifted)
        n = shifted.shape[0]
        
        def matvec(x):
            return sla.lu_solve(lu, sla.lu_solve(lu, x, trans=2))
        
        op = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        try:
            top = spla.eigsh(op, k=1, which="LM", return_eigenvectors=False)
        except spla.ArpackNoConvergence as e:
            raise NumericalError("Inverse iteration for sigma_min did not converge", {"converged": len(e.eigenvalues)})
        return float(1.0 / np.sqrt(np.max(np.abs(top))))
    
    def default_beta_grid(self, norm: float, beta_max: Optional[float] = None) -> np.ndarray:
        """Linear on [0, 10], log-spaced from 10 to 10^3 max(||A||, 1)."""
        top = beta_max if beta_max is not None else 1e3 * max(norm, 1.0)
        linear = np.linspace(0.0, min(LINEAR_END, top), LINEAR_POINTS)
        if top <= LINEAR_END:
            return linear
        return np.unique(np.concatenate([linear, np.geomspace(LINEAR_END, top, LOG_POINTS)]))
    
    def sweep(self, gen: Generator, betas: np.ndarray, max_workers: Optional[int] = None) -> np.ndarray:
        """Resolvent norms at every beta, computed in parallel, in grid order."""
        norms = run_ordered(lambda b: self.resolvent_norm(gen, float(b)), list(betas), max_workers)
        return np.array(norms)
    
    def refine_grid(self, betas: np.ndarray, norms: np.ndarray, eigenvalues: Optional[np.ndarray]) -> np.ndarray:
        """Extra samples around near-axis eigenvalues and around the coarse maximum."""
        top = float(betas.max())
        extra = []
        if eigenvalues is not None and eigenvalues.size:
            near = eigenvalues[np.argsort(np.abs(eigenvalues.real))][:10]
            for lam in near:
                centre = abs(lam.imag)
                width = 2.0 * max(abs(lam.real), 1e-3)
                extra.append(np.linspace(centre - width, centre + width, 9))
        i = int(np.argmax(norms))
        lo = betas[max(i - 1, 0)]
        hi = betas[min(i + 1, betas.size - 1)]
        extra.append(np.linspace(lo, hi, 21))
        refined = np.concatenate([betas] + extra)
        refined = refined[(refined >= 0.0) & (refined <= top)]
        return np.unique(refined)
    
    def decay_certificate(self, gen: Generator, abscissa: float, samples: int = 40) -> DecayCertificate:
        """omega = |alpha| and M = max_t ||e^{At}|| e^{|alpha| t} over [0, 5/|alpha|].

        The propagator is the exact matrix exponential (scipy.linalg.expm of A dt, raised to k),
        not the time stepper, so M carries no integrator damping.
        """
        omega = abs(abscissa)
        horizon = 5.0 / omega if omega > 0 else 1.0
        dt = horizon / samples
        step = sla.expm(gen.a_red * dt)
        prop = np.eye(gen.dim)
        overshoot = 1.0
        for k in range(1, samples + 1):
            prop = step @ prop
            overshoot = max(overshoot, float(np.linalg.norm(prop, 2)) * np.exp(omega * k * dt))
        return DecayCertificate(omega=omega, overshoot=overshoot, horizon=horizon, samples=samples)
    
    def sweep_and_certify(
        self,
        gen: Generator,
        betas: Optional[np.ndarray] = None,
        beta_max: Optional[float] = None,
        refine: bool = True,
        certify: bool = True,
        max_workers: Optional[int] = None,
    ) -> SpectralReport:
        """Resolvent sweep on beta >= 0, C_sup with its location, and the decay certificate."""
        report = self.compute_spectrum(gen)
        eigs = report.eigenvalues()
        norm = self.operator_norm(gen)
        
        grid = np.asarray(betas, dtype=float) if betas is not None else self.default_beta_grid(norm, beta_max)
        norms = self.sweep(gen, grid, max_workers)
        if refine:
            fine = self.refine_grid(grid, norms, eigs)
            new = np.setdiff1d(fine, grid)
            if new.size:
                norms = np.concatenate([norms, self.sweep(gen, new, max_workers)])
                grid = np.concatenate([grid, new])
                order = np.argsort(grid)
                grid, norms = grid[order], norms[order]
        
        i = int(np.argmax(norms))
        interior = i < grid.size - 1
        if not interior:
            logger.warning(
                f"Resolvent sweep maximum on {gen.grid_id} sits at beta_max={grid[-1]:.3e}; increase beta_max"
            )
        
        dist = np.min(np.abs(1j * grid[:, None] - eigs[None, :]), axis=1)
        bound_gap = float(np.min(norms - 1.0 / dist))
        tail = grid >= TAIL_FACTOR * norm
        tail_dev = float(np.max(np.abs(grid[tail] * norms[tail] - 1.0))) if np.any(tail) else None
        
        certificate = self.decay_certificate(gen, report.abscissa) if certify else None
        report = report.model_copy(
            update={
                "operator_norm": norm,
                "samples": [SweepSample(beta=float(b), resolvent_norm=float(r)) for b, r in zip(grid, norms)],
                "c_sup": float(norms[i]),
                "beta_star": float(grid[i]),
                "sup_interior": bool(interior),
                "boundary_warning": bool(not interior),
                "spectral_bound_gap": bound_gap,
                "tail_deviation": tail_dev,
                "certificate": certificate,
            }
        )
        logger.info(
            f"Sweep on {gen.grid_id}, rho={gen.rho}: C_sup={report.c_sup:.4e} at beta={report.beta_star:.4e}, "
            f"{grid.size} samples"
        )
        return report
