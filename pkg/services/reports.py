import logging
import uuid
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import pandas as pd

from core.numbers import Gaussian
from models.artifact import Artifact, ArtifactStatus, ArtifactType, InvariantCheck, RunReport

logger = logging.getLogger(__name__)

# In-memory registry: run id -> artifacts of that run
artifacts_db: dict[str, list[Artifact]] = {}


def save_artifact(artifact: Artifact) -> Artifact:
    artifacts_db.setdefault(artifact.run_id, []).append(artifact)
    return artifact


def get_artifacts(run_id: str) -> list[Artifact]:
    return list(artifacts_db.get(run_id, []))


def get_latest_artifact(run_id: str, name: str) -> Optional[Artifact]:
    matching = [a for a in artifacts_db.get(run_id, []) if a.name == name]
    return max(matching, key=lambda a: a.created_at) if matching else None


def _flatten(row: Mapping[str, Any]) -> dict[str, Any]:
    """Exact numbers become integer numerator/denominator columns."""
    out: dict[str, Any] = {}
    for key, value in row.items():
        if isinstance(value, bool) or value is None:
            out[key] = value
        elif isinstance(value, Gaussian):
            out[f"{key}_re_num"] = value.re.numerator
            out[f"{key}_re_den"] = value.re.denominator
            out[f"{key}_im_num"] = value.im.numerator
            out[f"{key}_im_den"] = value.im.denominator
        elif isinstance(value, Fraction):
            out[f"{key}_num"] = value.numerator
            out[f"{key}_den"] = value.denominator
        elif isinstance(value, complex):
            out[f"{key}_re"] = value.real
            out[f"{key}_im"] = value.imag
        elif isinstance(value, (int, float, str)):
            out[key] = value
        else:
            out[key] = str(value)
    return out


def _unflatten(row: Mapping[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    used: set[str] = set()
    for key in row:
        if key.endswith("_re_num"):
            base = key[: -len("_re_num")]
            parts = [f"{base}_re_num", f"{base}_re_den", f"{base}_im_num", f"{base}_im_den"]
            if all(p in row for p in parts):
                used.update(parts)
                if row[parts[0]] != "":
                    re = Fraction(int(row[parts[0]]), int(row[parts[1]]))
                    im = Fraction(int(row[parts[2]]), int(row[parts[3]]))
                    out[base] = Gaussian(re, im)
                else:
                    out.setdefault(base, "")
    for key in row:
        if key in used:
            continue
        if key.endswith("_num") and key[:-4] + "_den" in row:
            base = key[:-4]
            used.update([key, base + "_den"])
            if row[key] != "":
                out[base] = Fraction(int(row[key]), int(row[base + "_den"]))
            else:
                out.setdefault(base, "")
    for key, value in row.items():
        if key not in used:
            out.setdefault(key, value)
    return out


class ReportService:
    """CSV tables and Markdown summaries for command runs."""

    def write_table(
        self,
        run_id: str,
        command: str,
        name: str,
        rows: Iterable[Mapping[str, Any]],
        out_dir: Path,
        status: ArtifactStatus = ArtifactStatus.INFO,
    ) -> Artifact:
        flat = [_flatten(r) for r in rows]
        columns = list(dict.fromkeys(k for r in flat for k in r))
        # object dtype keeps arbitrary-size integers exact
        frame = pd.DataFrame(
            [{c: r.get(c, "") for c in columns} for r in flat], columns=columns, dtype=object
        )
        path = Path(out_dir) / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        logger.debug("wrote %s (%d rows)", path, len(frame))
        return save_artifact(
            Artifact(
                id=str(uuid.uuid4()),
                run_id=run_id,
                command=command,
                name=name,
                type=ArtifactType.TABLE,
                status=status,
                path=path,
                rows=len(frame),
                columns=list(frame.columns),
            )
        )

    def read_table(self, path: Path) -> list[dict[str, Any]]:
        """Rows of a written table with exact numbers rebuilt; other cells stay strings."""
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            return []
        return [_unflatten(r) for r in frame.to_dict(orient="records")]

    def write_summary(
        self,
        report: RunReport,
        title: str,
        sections: Mapping[str, str],
        out_dir: Path,
    ) -> Artifact:
        lines = [f"# {title}", "", f"- run: `{report.run_id}`", f"- scene: `{report.scene}`"]
        lines += [f"- invariant violations: {len(report.violations)}", ""]
        lines += self._checks_table(report.checks)
        for heading, body in sections.items():
            lines += ["", f"## {heading}", "", body.rstrip()]
        if report.artifacts:
            lines += ["", "## Files", ""]
            lines += [f"- `{a.path.name}` ({a.rows} rows)" for a in report.artifacts]

        path = Path(out_dir) / "summary.md"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        status = ArtifactStatus.FAILED if report.violations else ArtifactStatus.PASSED
        return save_artifact(
            Artifact(
                id=str(uuid.uuid4()),
                run_id=report.run_id,
                command=report.command,
                name="summary",
                type=ArtifactType.SUMMARY,
                status=status,
                path=path,
            )
        )

    def _checks_table(self, checks: list[InvariantCheck]) -> list[str]:
        if not checks:
            return ["No invariants were checked."]
        lines = ["| invariant | result | detail |", "|---|---|---|"]
        for c in checks:
            detail = ", ".join(f"{k}={v}" for k, v in c.detail.items())
            lines.append(f"| {c.name} | {'pass' if c.ok else 'FAIL'} | {detail} |")
        return lines


report_service = ReportService()
