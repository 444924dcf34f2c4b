from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field


def _now() -> datetime:
    return datetime.now(timezone.utc)


class ArtifactType(str, Enum):
    TABLE = "table"  # CSV, rationals as num/den columns
    SUMMARY = "summary"  # Markdown


class ArtifactStatus(str, Enum):
    PASSED = "passed"
    FAILED = "failed"
    INFO = "info"  # carries no invariant


class Artifact(BaseModel):
    """A file produced by a command run."""

    id: str
    run_id: str
    command: str
    name: str
    type: ArtifactType
    status: ArtifactStatus = ArtifactStatus.INFO
    path: Path
    rows: int = Field(0, description="Data rows (tables only)")
    columns: list[str] = Field(default_factory=list)
    created_at: datetime = Field(default_factory=_now)


class InvariantCheck(BaseModel):
    """One entry of the invariant log."""

    name: str
    ok: bool
    detail: dict[str, Any] = Field(default_factory=dict)


class RunReport(BaseModel):
    run_id: str
    command: str
    scene: str
    checks: list[InvariantCheck] = Field(default_factory=list)
    artifacts: list[Artifact] = Field(default_factory=list)
    error: Optional[str] = None
    started_at: datetime = Field(default_factory=_now)
    completed_at: Optional[datetime] = None

    @property
    def violations(self) -> list[InvariantCheck]:
        return [c for c in self.checks if not c.ok]

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 2
        return 1 if self.violations else 0
