import asyncio
import hashlib
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..models.run import ArtifactEntry, RunManifest, RunProgress, RunRecord, RunStatus


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunService:
    """In-memory ledger of runs: status, progress, phase timings and artifacts."""
    
    def __init__(self):
        self._runs: Dict[str, RunRecord] = {}
        self._run_lock = asyncio.Lock()
    
    async def create_run(self, experiment: str) -> str:
        """Register a new run."""
        run_id = f"{experiment}-{datetime.now():%Y%m%d-%H%M%S}-{uuid.uuid4().hex[:8]}"
        async with self._run_lock:
            self._runs[run_id] = RunRecord(run_id=run_id, experiment=experiment, created_at=datetime.now())
        return run_id
    
    async def update_run_status(self, run_id: str, status: RunStatus, error: Optional[str] = None) -> None:
        async with self._run_lock:
            run = self._require(run_id)
            run.status = status
            if status == RunStatus.RUNNING and run.started_at is None:
                run.started_at = datetime.now()
            elif status in [RunStatus.COMPLETED, RunStatus.FAILED]:
                run.completed_at = datetime.now()
            if error:
                run.error = error
    
    async def update_run_progress(self, run_id: str, current: int, total: int, message: Optional[str] = None) -> None:
        async with self._run_lock:
            if run_id not in self._runs:
                return
            percentage = (current / total * 100) if total > 0 else 0.0
            self._runs[run_id].progress = RunProgress(
                current=current,
                total=total,
                percentage=round(percentage, 2),
                message=message,
                updated_at=datetime.now(),
            )
    
    async def record_timing(self, run_id: str, phase: str, seconds: float) -> None:
        """Accumulate wall time of a phase."""
        async with self._run_lock:
            run = self._require(run_id)
            run.timings[phase] = run.timings.get(phase, 0.0) + seconds
    
    async def add_warning(self, run_id: str, message: str) -> None:
        async with self._run_lock:
            self._require(run_id).warnings.append(message)
    
    async def add_artifact(self, run_id: str, relative_path: str) -> None:
        async with self._run_lock:
            self._require(run_id).artifacts.append(relative_path)
    
    async def complete_run(self, run_id: str) -> None:
        async with self._run_lock:
            run = self._require(run_id)
            run.status = RunStatus.COMPLETED
            run.completed_at = datetime.now()
            run.progress.current = run.progress.total
            run.progress.percentage = 100.0
    
    async def fail_run(self, run_id: str, error: str) -> None:
        await self.update_run_status(run_id, RunStatus.FAILED, error)
    
    async def get_run(self, run_id: str) -> Optional[RunRecord]:
        async with self._run_lock:
            run = self._runs.get(run_id)
            return run.model_copy(deep=True) if run else None
    
    async def build_manifest(
        self,
        run_id: str,
        run_dir: Path,
        seed: int,
        grid_id: str,
        rho: float,
        config: Dict[str, Any],
        versions: Dict[str, str],
        summary: Optional[Dict[str, Any]] = None,
    ) -> RunManifest:
        """Manifest listing every artifact with its content hash."""
        run = await self.get_run(run_id)
        if run is None:
            raise ValueError(f"Run {run_id} not found")
        artifacts = []
        for rel in run.artifacts:
            path = run_dir / rel
            artifacts.append(ArtifactEntry(path=rel, sha256=sha256_of(path), size_bytes=path.stat().st_size))
        return RunManifest(
            run_id=run.run_id,
            experiment=run.experiment,
            status=run.status,
            created_at=run.created_at,
            completed_at=run.completed_at,
            seed=seed,
            grid_id=grid_id,
            rho=rho,
            config=config,
            versions=versions,
            timings=run.timings,
            artifacts=artifacts,
            warnings=run.warnings,
            summary=summary or {},
            error=run.error,
        )
    
    def get_run_stats(self) -> Dict[str, Any]:
        """Counts of runs by status."""
        stats: Dict[str, Any] = {"total_runs": len(self._runs), "by_status": {}}
        for run in self._runs.values():
            status = run.status.value
            stats["by_status"][status] = stats["by_status"].get(status, 0) + 1
        return stats
    
    def _require(self, run_id: str) -> RunRecord:
        if run_id not in self._runs:
            raise ValueError(f"Run {run_id} not found")
        return self._runs[run_id]
