import logging
import uuid
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from pydantic import BaseModel, ConfigDict, ValidationError

from config import Settings, get_settings
from core.errors import ConfigError, TreeHarmonicError
from models.artifact import Artifact, ArtifactStatus, InvariantCheck, RunReport
from models.measure import ArcMeasure
from models.operator import FirstPassageTable, TransitionOperator
from models.scene import Rational, Scene
from models.tree import Tree
from services.boundary_measure import measure_service
from services.operators import operator_service
from services.reports import report_service
from services.tree_core import tree_service

logger = logging.getLogger(__name__)


class PipelineStage(BaseModel):
    """A stage of a command run."""

    name: str
    status: str = "pending"
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error: Optional[str] = None


class RunFlags(BaseModel):
    """Command-line overrides; None leaves the scene or settings value alone."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    seed: Optional[int] = None
    depth: Optional[int] = None
    horizon: Optional[int] = None
    tol: Optional[Rational] = None
    out_dir: Optional[Path] = None
    jobs: Optional[int] = None


class RunContext:
    """What a command handler sees: the scene, its built objects and the run log."""

    def __init__(
        self,
        orchestrator: "Orchestrator",
        scene: Scene,
        settings: Settings,
        report: RunReport,
        out_dir: Path,
    ):
        self.orchestrator = orchestrator
        self.scene = scene
        self.settings = settings
        self.report = report
        self.out_dir = out_dir

    @property
    def task(self):
        return self.scene.task

    @cached_property
    def tree(self) -> Tree:
        return tree_service.build_tree(self.scene.tree)

    @cached_property
    def operator(self) -> TransitionOperator:
        if self.scene.operator is None:
            raise ConfigError("scene has no operator", {"command": self.report.command})
        return operator_service.build_operator(self.tree, self.scene.operator)

    @cached_property
    def descent(self) -> FirstPassageTable:
        return operator_service.descent_probabilities(self.operator)

    @cached_property
    def measure(self) -> ArcMeasure:
        q = self.operator if self.scene.operator is not None else None
        if self.scene.measure is None and q is not None and not q.is_forward_only:
            return operator_service.hitting_distribution(q, self.descent)
        return measure_service.build_measure(self.tree, self.scene.measure, q)

    def check(self, name: str, ok: bool, **detail: Any) -> bool:
        detail_text = {k: str(v) for k, v in detail.items()}
        entry = InvariantCheck(name=name, ok=bool(ok), detail=detail_text)
        self.report.checks.append(entry)
        if entry.ok:
            logger.info("invariant %s: pass", name)
        else:
            logger.warning("invariant %s: FAIL %s", name, entry.detail)
        self.orchestrator._emit_event("invariant", entry.model_dump())
        return entry.ok

    def table(
        self, name: str, rows: list[Mapping[str, Any]], ok: Optional[bool] = None
    ) -> Artifact:
        status = ArtifactStatus.INFO
        if ok is not None:
            status = ArtifactStatus.PASSED if ok else ArtifactStatus.FAILED
        artifact = report_service.write_table(
            self.report.run_id, self.report.command, name, rows, self.out_dir, status
        )
        self.report.artifacts.append(artifact)
        self.orchestrator._emit_event("artifact_written", {"name": name, "rows": artifact.rows})
        return artifact


Handler = Callable[[RunContext], Mapping[str, str]]


class CommandRouter:
    """Actions of one command group, registered by decorator."""

    def __init__(self, group: str):
        self.group = group
        self.handlers: dict[str, tuple[Handler, str]] = {}

    def command(self, action: str, title: str = "") -> Callable[[Handler], Handler]:
        def register(handler: Handler) -> Handler:
            self.handlers[action] = (handler, title or f"{self.group} {action}")
            return handler

        return register


class Orchestrator:
    """Runs one command: load scene, apply flags, execute, write the summary."""

    def __init__(self):
        self.routes: dict[tuple[str, str], tuple[Handler, str]] = {}
        self.event_callbacks: list[Callable[[str, Any], None]] = []

    def include_router(self, router: CommandRouter) -> None:
        for action, entry in router.handlers.items():
            self.routes[(router.group, action)] = entry

    def commands(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for group, action in sorted(self.routes):
            out.setdefault(group, []).append(action)
        return out

    def on_event(self, callback: Callable[[str, Any], None]) -> None:
        """Register event callback."""
        self.event_callbacks.append(callback)

    def _emit_event(self, event_type: str, data: Any) -> None:
        logger.debug("event %s: %s", event_type, data)
        for cb in self.event_callbacks:
            try:
                cb(event_type, data)
            except Exception:
                logger.exception("event callback failed on %s", event_type)

    def load_scene(self, path: Path) -> Scene:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError("cannot read scene file", {"path": str(path)}) from e
        try:
            return Scene.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError("scene does not match the schema", {"detail": str(e)}) from e

    def apply_flags(self, scene: Scene, flags: RunFlags) -> tuple[Scene, Settings]:
        if flags.depth is not None:
            scene = scene.with_depth(flags.depth)
        scene = scene.task_update(horizon=flags.horizon, tol=flags.tol)
        updates = {
            "seed": flags.seed,
            "out_dir": flags.out_dir,
            "n_jobs": flags.jobs,
        }
        settings = get_settings().model_copy(
            update={k: v for k, v in updates.items() if v is not None}
        )
        return scene, settings

    def run(
        self, group: str, action: str, scene_path: Path, flags: Optional[RunFlags] = None
    ) -> RunReport:
        flags = flags or RunFlags()
        command = f"{group} {action}"
        report = RunReport(run_id=uuid.uuid4().hex[:12], command=command, scene=str(scene_path))
        stages = [PipelineStage(name=n) for n in ("load", "execute", "report")]
        current: Optional[PipelineStage] = None

        def start(stage: PipelineStage) -> None:
            nonlocal current
            if current is not None:
                current.status = "completed"
                current.completed_at = datetime.now(timezone.utc)
            current = stage
            stage.status = "running"
            stage.started_at = datetime.now(timezone.utc)
            self._emit_event("stage_start", {"command": command, "stage": stage.name})

        try:
            start(stages[0])
            if (group, action) not in self.routes:
                raise ConfigError("unknown command", {"command": command})
            handler, title = self.routes[(group, action)]
            scene, settings = self.apply_flags(self.load_scene(scene_path), flags)
            out_dir = Path(settings.out_dir) / f"{group}-{action}"
            ctx = RunContext(self, scene, settings, report, out_dir)

            start(stages[1])
            sections = handler(ctx)

            start(stages[2])
            summary = report_service.write_summary(report, title, sections, out_dir)
            report.artifacts.append(summary)
            current.status = "completed"
            self._emit_event(
                "pipeline_complete",
                {"command": command, "violations": len(report.violations)},
            )
        except (TreeHarmonicError, ValueError) as e:
            report.error = f"{type(e).__name__}: {e}"
            if current is not None:
                current.status = "failed"
                current.error = report.error
            self._emit_event("pipeline_error", {"command": command, "error": report.error})
        report.completed_at = datetime.now(timezone.utc)
        logger.info("%s finished with exit code %d", command, report.exit_code)
        return report


# Global instance
orchestrator = Orchestrator()
