"""Subjective-test annotation service.

Serves side-by-side questions (stimulus, ground truth, two histogram
equalized estimated maps), enforces the at-least-5-seconds rule on the
server clock, stores answers in an append-only fsynced JSON-lines log, and
exports the collected judgments in the analytics interchange format.

Left/right placement is randomized per (subject, question) from the service
seed; answers are stored in canonical (A, B) orientation.
"""

from __future__ import annotations

import io
import json
import os
import threading
import uuid
from pathlib import Path
from typing import Callable

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .bench import GSM_ID, Manifest, RND_ID, load_manifest
from .judgments import Answer, JudgmentDataset, JudgmentRecord, record_to_json
from .maps import hist_equalize, minmax_normalize

MIN_VIEW_MS = 5000


def _stable_hash(s: str) -> int:
    h = 0
    for ch in s.encode("utf-8"):
        h = (h * 131 + ch) & 0x7FFFFFFF
    return h


class Question:
    def __init__(self, question_id: int, image_id: str, esm_a: str, esm_b: str):
        self.question_id = question_id
        self.image_id = image_id
        self.esm_a = esm_a
        self.esm_b = esm_b


def build_questions(manifest: Manifest) -> list[Question]:
    """All unordered ESM pairs per image, in deterministic order."""
    models = [m for m in manifest.model_ids if m not in (GSM_ID, RND_ID)]
    questions = []
    qid = 0
    for image_id in manifest.image_ids:
        for i in range(len(models)):
            for j in range(i + 1, len(models)):
                questions.append(Question(qid, image_id, models[i], models[j]))
                qid += 1
    return questions


class AnnotationState:
    """All mutable service state, rebuilt from the log on startup."""

    def __init__(self, manifest: Manifest, log_path, seed: int, clock: Callable[[], int] | None):
        self.manifest = manifest
        self.log_path = Path(log_path)
        self.seed = seed
        self.clock = clock or (lambda: int(__import__("time").time() * 1000))
        self.questions = build_questions(manifest)
        self.by_id = {q.question_id: q for q in self.questions}
        self.sessions: dict[str, str] = {}  # token -> subject
        self.served_at: dict[tuple[str, int], int] = {}  # (subject, qid) -> ms
        self.answers: dict[tuple[str, int], dict] = {}  # (subject, qid) -> row
        self.tabs: dict[str, str] = {}  # token -> active tab id
        self.lock = threading.Lock()
        self._log_file = None
        self._replay()

    # -- side randomization and per-subject ordering are pure functions of the seed

    def swapped_for(self, subject: str, question_id: int) -> bool:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed & 0x7FFFFFFF, _stable_hash(subject), question_id])
        )
        return bool(rng.random() < 0.5)

    def order_for(self, subject: str) -> list[int]:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed & 0x7FFFFFFF, _stable_hash(subject), 0x0BD])
        )
        return [int(q) for q in rng.permutation(len(self.questions))]

    # -- append-only log

    def _replay(self) -> None:
        if self.log_path.exists():
            for line in self.log_path.read_text().splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                kind = row.get("type")
                if kind == "meta" and int(row["seed"]) != self.seed:
                    raise ValueError(
                        f"log {self.log_path} was written with seed {row['seed']}, not {self.seed}"
                    )
                elif kind == "session":
                    self.sessions[row["token"]] = row["subject"]
                elif kind == "serve":
                    self.served_at[(row["subject"], int(row["question_id"]))] = int(row["at"])
                elif kind == "answer":
                    self.answers[(row["subject"], int(row["question_id"]))] = row
        else:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self._append({"type": "meta", "seed": self.seed, "questions": len(self.questions)})

    def _append(self, row: dict) -> None:
        if self._log_file is None:
            self._log_file = open(self.log_path, "a", encoding="utf-8")
        self._log_file.write(json.dumps(row, sort_keys=True) + "\n")
        self._log_file.flush()
        os.fsync(self._log_file.fileno())

    # -- protocol operations

    def open_session(self, subject: str) -> str:
        with self.lock:
            token = uuid.uuid4().hex
            self.sessions[token] = subject
            self._append({"type": "session", "token": token, "subject": subject, "at": self.clock()})
            return token

    def subject_of(self, token: str) -> str:
        subject = self.sessions.get(token)
        if subject is None:
            raise HTTPException(401, "unknown session token")
        return subject

    def next_question(self, subject: str) -> Question | None:
        for qid in self.order_for(subject):
            if (subject, qid) not in self.answers:
                return self.by_id[qid]
        return None

    def mark_served(self, subject: str, question_id: int) -> int:
        with self.lock:
            at = self.clock()
            self.served_at[(subject, question_id)] = at
            self._append({"type": "serve", "subject": subject, "question_id": question_id, "at": at})
            return at

    def record_answer(self, subject: str, question_id: int, choice: str) -> dict:
        if question_id not in self.by_id:
            raise HTTPException(404, f"unknown question {question_id}")
        if choice not in ("left", "right"):
            raise HTTPException(422, "choice must be 'left' or 'right'")
        with self.lock:
            key = (subject, question_id)
            if key in self.answers:
                raise HTTPException(409, "question already answered by this subject")
            served = self.served_at.get(key)
            if served is None:
                raise HTTPException(409, "question was never served to this subject")
            now = self.clock()
            elapsed = now - served
            if elapsed < MIN_VIEW_MS:
                raise HTTPException(
                    422,
                    detail={
                        "error": "answered before the minimum viewing time",
                        "retry_after_ms": MIN_VIEW_MS - elapsed,
                    },
                )
            chose_left = choice == "left"
            swapped = self.swapped_for(subject, question_id)
            # left shows B when swapped, so un-swap back to canonical (A, B)
            chose_a = chose_left != swapped
            row = {
                "type": "answer",
                "subject": subject,
                "question_id": question_id,
                "chose_a": chose_a,
                "served_at": served,
                "answered_at": now,
            }
            self._append(row)
            self.answers[key] = row
            return row

    def export_dataset(self) -> JudgmentDataset:
        by_question: dict[int, list[dict]] = {}
        for (_, qid), row in self.answers.items():
            by_question.setdefault(qid, []).append(row)
        records = []
        for qid in sorted(by_question):
            q = self.by_id[qid]
            rows = sorted(by_question[qid], key=lambda r: r["subject"])
            answers = tuple(
                Answer(r["subject"], bool(r["chose_a"]), int(r["answered_at"] - r["served_at"]))
                for r in rows
            )
            records.append(JudgmentRecord(qid, q.image_id, q.esm_a, q.esm_b, GSM_ID, answers))
        return JudgmentDataset(tuple(records))


class SessionRequest(BaseModel):
    subject_id: str


class AnswerRequest(BaseModel):
    question_id: int
    choice: str


class HeartbeatRequest(BaseModel):
    tab_id: str


FALLBACK_PAGE = """<!doctype html><meta charset="utf-8">
<title>salbench annotation</title>
<p>The annotation UI bundle is not built. Run <code>npm run build</code> in
<code>frontend/</code> and restart, or use the JSON API directly.</p>
"""


def create_app(
    manifest: Manifest | str,
    log_path,
    seed: int = 0,
    clock: Callable[[], int] | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    state = AnnotationState(manifest, log_path, seed, clock)
    app = FastAPI(title="salbench annotation service")
    app.state.annotation = state

    @app.post("/session")
    def open_session(req: SessionRequest):
        token = state.open_session(req.subject_id)
        return {"token": token, "total": len(state.questions)}

    @app.get("/question")
    def get_question(token: str):
        subject = state.subject_of(token)
        q = state.next_question(subject)
        answered = sum(1 for (s, _) in state.answers if s == subject)
        if q is None:
            return {"done": True, "answered": answered, "total": len(state.questions)}
        served_at = state.mark_served(subject, q.question_id)
        media = {
            which: f"/media/{q.question_id}/{which}.png?token={token}"
            for which in ("stimulus", "gsm", "left", "right")
        }
        return {
            "done": False,
            "question_id": q.question_id,
            "image_id": q.image_id,
            "served_at": served_at,
            "min_view_ms": MIN_VIEW_MS,
            "media": media,
            "answered": answered,
            "total": len(state.questions),
        }

    @app.post("/answer")
    def post_answer(req: AnswerRequest, token: str):
        subject = state.subject_of(token)
        state.record_answer(subject, req.question_id, req.choice)
        answered = sum(1 for (s, _) in state.answers if s == subject)
        return {"ok": True, "answered": answered, "total": len(state.questions)}

    @app.post("/heartbeat")
    def heartbeat(req: HeartbeatRequest, token: str):
        state.subject_of(token)
        with state.lock:
            state.tabs[token] = req.tab_id
        return {"active_tab": state.tabs[token]}

    @app.get("/export")
    def export():
        dataset = state.export_dataset()
        body = "".join(record_to_json(r) + "\n" for r in dataset.records)
        return PlainTextResponse(body, media_type="application/jsonl")

    @app.get("/progress")
    def progress():
        per_subject: dict[str, int] = {}
        per_question: dict[str, int] = {}
        for subject, qid in state.answers:
            per_subject[subject] = per_subject.get(subject, 0) + 1
            per_question[str(qid)] = per_question.get(str(qid), 0) + 1
        return {
            "total_questions": len(state.questions),
            "per_subject": dict(sorted(per_subject.items())),
            "per_question": dict(sorted(per_question.items())),
        }

    @app.get("/media/{question_id}/{which}.png")
    def media(question_id: int, which: str, token: str = Query(...)):
        subject = state.subject_of(token)
        q = state.by_id.get(question_id)
        if q is None:
            raise HTTPException(404, f"unknown question {question_id}")
        man = state.manifest
        if which == "stimulus":
            from .maps import load_map

            arr = load_map(man.path(man.stimulus_files[q.image_id]))
        elif which == "gsm":
            arr = hist_equalize(minmax_normalize(man.load_gsm(q.image_id)))
        elif which in ("left", "right"):
            swapped = state.swapped_for(subject, question_id)
            show_a = (which == "left") != swapped
            model = q.esm_a if show_a else q.esm_b
            arr = hist_equalize(minmax_normalize(man.load_model_map(model, q.image_id)))
        else:
            raise HTTPException(404, f"unknown rendition {which!r}")
        return Response(_to_png(arr), media_type="image/png")

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return FALLBACK_PAGE

    return app


def _to_png(arr: np.ndarray) -> bytes:
    from PIL import Image

    img = Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def default_ui_dir() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


def run_server(manifest_path: str, log_path: str, port: int, seed: int) -> None:
    import uvicorn

    app = create_app(manifest_path, log_path, seed, ui_dir=default_ui_dir())
    uvicorn.run(app, host="127.0.0.1", port=port)
