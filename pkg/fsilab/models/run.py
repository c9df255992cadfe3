from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunStatus(str, Enum):
    """Status of a run."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class RunProgress(BaseModel):
    current: int = 0
    total: int = 0
    percentage: float = 0.0
    message: Optional[str] = None
    updated_at: Optional[datetime] = None


class RunRecord(BaseModel):
    """Ledger entry for one run."""
    run_id: str
    experiment: str
    status: RunStatus = RunStatus.PENDING
    created_at: datetime
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error: Optional[str] = None
    progress: RunProgress = Field(default_factory=RunProgress)
    timings: Dict[str, float] = Field(default_factory=dict)  # seconds per phase
    artifacts: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)


class ArtifactEntry(BaseModel):
    path: str  # relative to the run directory
    sha256: str
    size_bytes: int


class RunManifest(BaseModel):
    """Everything needed to reproduce and audit a run."""
    run_id: str
    experiment: str
    status: RunStatus
    created_at: datetime
    completed_at: Optional[datetime] = None
    seed: int
    grid_id: str
    rho: float
    config: Dict[str, Any]
    versions: Dict[str, str]
    timings: Dict[str, float]
    artifacts: List[ArtifactEntry]
    warnings: List[str] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None
