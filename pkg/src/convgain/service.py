"""Annotation task service: chronological serving, reading lock, agreement."""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from typing import Callable

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .stats import AgreementReport, DegenerateDataError, quality_control
from .textanalysis import RuleBasedAnalyzer, tokenize

LOCK_SECONDS = 60.0

VARIANTS = ("info_only", "three_aspects")
VARIANT_SCALES = {
    "info_only": ("cig",),
    "three_aspects": ("novelty", "relevance", "implication_scope"),
}


def keyword_overlap(summary: str, target_text: str) -> dict[str, list[int]]:
    """Content lemmas shared by summary and target, mapped to their word
    positions (0-based token index) in the summary."""
    analyzer = RuleBasedAnalyzer()
    target_lemmas = set(analyzer.analyze(target_text).content)
    positions: dict[str, list[int]] = {}
    for pos, token in enumerate(tokenize(summary)):
        lemma_list = analyzer.analyze(token).content
        if not lemma_list:
            continue
        lemma = lemma_list[0]
        if lemma in target_lemmas:
            positions.setdefault(lemma, []).append(pos)
    return positions


@dataclass(frozen=True)
class SegmentSpec:
    """One segment's worth of annotation content, as prepared by the pipeline."""

    segment_index: int
    topic: str
    prior_summary: str
    short_window: tuple[dict, ...]  # {"index", "speaker", "stance", "text"}
    targets: tuple[dict, ...]  # non-skipped only


@dataclass
class ServedTask:
    task_id: str
    session_id: str
    annotator_id: str
    segment_pos: int  # position in the session's chronological order
    variant: str
    served_at: float
    completed: bool = False


@dataclass
class RatingVersion:
    task_id: str
    annotator_id: str
    utterance_index: int
    scores: dict[str, int]
    submitted_at: float
    version: int


@dataclass
class Session:
    session_id: str
    variant: str
    segments: list[SegmentSpec]
    annotators: set[str] = field(default_factory=set)


class ServiceError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


@dataclass
class AnnotationService:
    """In-memory service core; the HTTP layer is a thin adapter over this."""

    clock: Callable[[], float] = time.time
    sessions: dict[str, Session] = field(default_factory=dict)
    tasks: dict[str, ServedTask] = field(default_factory=dict)
    # (session, annotator, segment_pos) -> task id, for idempotent serving
    served_index: dict[tuple[str, str, int], str] = field(default_factory=dict)
    ratings_log: list[RatingVersion] = field(default_factory=list)

    def add_session(self, session: Session) -> None:
        if session.variant not in VARIANTS:
            raise ValueError(f"unknown variant {session.variant!r}")
        if session.session_id in self.sessions:
            raise ValueError(f"duplicate session {session.session_id!r}")
        self.sessions[session.session_id] = session

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
        return session

    def _task_complete(self, task: ServedTask) -> bool:
        session = self.sessions[task.session_id]
        targets = session.segments[task.segment_pos].targets
        rated = {
            r.utterance_index
            for r in self.ratings_log
            if r.task_id == task.task_id
        }
        return all(t["index"] in rated for t in targets)

    def next_task(self, session_id: str, annotator_id: str) -> dict:
        session = self._session(session_id)
        if annotator_id not in session.annotators:
            raise ServiceError(403, "unassigned_annotator",
                               f"{annotator_id!r} not assigned to {session_id!r}")
        pos = 0
        while pos < len(session.segments):
            key = (session_id, annotator_id, pos)
            task_id = self.served_index.get(key)
            if task_id is None:
                break
            if not self._task_complete(self.tasks[task_id]):
                return self._task_payload(self.tasks[task_id])
            pos += 1
        if pos >= len(session.segments):
            raise ServiceError(409, "session_complete",
                               "all segments rated by this annotator")
        task = ServedTask(
            task_id=uuid.uuid4().hex,
            session_id=session_id,
            annotator_id=annotator_id,
            segment_pos=pos,
            variant=session.variant,
            served_at=self.clock(),
        )
        self.tasks[task.task_id] = task
        self.served_index[(session_id, annotator_id, pos)] = task.task_id
        return self._task_payload(task)

    def _task_payload(self, task: ServedTask) -> dict:
        session = self.sessions[task.session_id]
        spec = session.segments[task.segment_pos]
        overlap = {
            str(t["index"]): keyword_overlap(spec.prior_summary, t["text"])
            for t in spec.targets
        }
        return {
            "task_id": task.task_id,
            "session_id": task.session_id,
            "variant": task.variant,
            "topic": spec.topic,
            "prior_summary": spec.prior_summary,
            "short_window": list(spec.short_window),
            "targets": list(spec.targets),
            "keyword_overlap": overlap,
            "served_at": task.served_at,
            "segment_pos": task.segment_pos,
            "segment_count": len(session.segments),
        }

    def submit_ratings(self, task_id: str, rows: list[dict]) -> dict:
        task = self.tasks.get(task_id)
        if task is None:
            raise ServiceError(404, "unknown_task", f"no task {task_id!r}")
        now = self.clock()
        first = not any(r.task_id == task_id for r in self.ratings_log)
        if first and now - task.served_at < LOCK_SECONDS:
            raise ServiceError(
                423, "lock_active",
                f"reading lock active for {LOCK_SECONDS - (now - task.served_at):.0f}s more",
            )
        session = self.sessions[task.session_id]
        spec = session.segments[task.segment_pos]
        valid_indices = {t["index"] for t in spec.targets}
        scales = VARIANT_SCALES[task.variant]
        for row in rows:
            idx = row.get("utterance_index")
            if idx not in valid_indices:
                raise ServiceError(422, "unknown_target",
                                   f"utterance {idx} not in this task")
            scores = row.get("scores", {})
            if set(scores) != set(scales):
                raise ServiceError(422, "missing_scale",
                                   f"expected scores for {sorted(scales)}")
            for name, value in scores.items():
                if not isinstance(value, int) or not 1 <= value <= 4:
                    raise ServiceError(422, "out_of_range",
                                       f"{name}={value!r} outside 1..4")
        accepted = []
        for row in rows:
            version = 1 + sum(
                1
                for r in self.ratings_log
                if r.task_id == task_id
                and r.utterance_index == row["utterance_index"]
            )
            record = RatingVersion(
                task_id=task_id,
                annotator_id=task.annotator_id,
                utterance_index=row["utterance_index"],
                scores=dict(row["scores"]),
                submitted_at=now,
                version=version,
            )
            self.ratings_log.append(record)
            accepted.append({"utterance_index": record.utterance_index,
                             "version": record.version})
        task.completed = self._task_complete(task)
        return {"accepted": accepted, "task_complete": task.completed}

    def latest_ratings(self, session_id: str) -> dict[str, dict[str, int]]:
        """annotator -> item key -> latest primary score, for agreement."""
        session = self._session(session_id)
        out: dict[str, dict[str, int]] = {}
        for record in self.ratings_log:
            task = self.tasks[record.task_id]
            if task.session_id != session_id:
                continue
            scale = VARIANT_SCALES[session.variant][0]
            key = f"{task.segment_pos}:{record.utterance_index}"
            # later log entries override: append-only storage, latest wins
            out.setdefault(record.annotator_id, {})[key] = record.scores[scale]
        return out

    def agreement(self, session_id: str) -> AgreementReport:
        ratings = self.latest_ratings(session_id)
        complete = {}
        session = self._session(session_id)
        for annotator, per_item in ratings.items():
            done = all(
                self._task_complete(self.tasks[tid])
                for (sid, a, _), tid in self.served_index.items()
                if sid == session_id and a == annotator
            )
            served = sum(
                1 for (sid, a, _) in self.served_index
                if sid == session_id and a == annotator
            )
            if done and served == len(session.segments):
                complete[annotator] = per_item
        if len(complete) < 2:
            raise ServiceError(409, "insufficient_annotators",
                               "fewer than 2 annotators completed the session")
        try:
            return quality_control(complete)
        except DegenerateDataError as exc:
            raise ServiceError(409, "degenerate_ratings", str(exc))


class RatingRow(BaseModel):
    utterance_index: int
    scores: dict[str, int]


class RatingSubmission(BaseModel):
    annotator_id: str | None = None
    ratings: list[RatingRow]


def create_app(service: AnnotationService) -> FastAPI:
    app = FastAPI(title="annotation-service")

    def _raise(exc: ServiceError):
        raise HTTPException(
            status_code=exc.status, detail={"code": exc.code, "detail": exc.detail}
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "sessions": len(service.sessions)}

    @app.get("/sessions/{session_id}/next-task")
    def next_task(session_id: str, annotator: str) -> dict:
        try:
            return service.next_task(session_id, annotator)
        except ServiceError as exc:
            _raise(exc)

    @app.post("/tasks/{task_id}/ratings")
    def submit(task_id: str, submission: RatingSubmission) -> dict:
        try:
            return service.submit_ratings(
                task_id, [row.model_dump() for row in submission.ratings]
            )
        except ServiceError as exc:
            _raise(exc)

    @app.get("/sessions/{session_id}/agreement")
    def agreement(session_id: str) -> dict:
        try:
            report = service.agreement(session_id)
        except ServiceError as exc:
            _raise(exc)
        return {
            "krippendorff_alpha": report.krippendorff_alpha,
            "pairwise_qwk": {f"{a}|{b}": v for (a, b), v in report.pairwise_qwk.items()},
            "mean_qwk": report.mean_qwk,
            "dropped": list(report.dropped),
            "directive": report.directive,
            "surviving": list(report.surviving),
        }

    return app
