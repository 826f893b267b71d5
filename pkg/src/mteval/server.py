"""Hidden-reference scoring service.

Scores submitted hypothesis files against reference files that are never
sent over the wire.  Submissions are durable: an append-only JSON-lines
log plus content-addressed hypothesis blobs, replayed on startup, so a
restart reproduces the leaderboard without rescoring anything.
"""

from __future__ import annotations

import hashlib
import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import DomainError
from .metrics import BleuScore, sp_bleu
from .tokenizer import load_model

MAX_PAYLOAD = 8 * 2**20
REFERENCE_SUFFIXES = (".txt", ".test")


class UnsupportedDirection(DomainError):
    pass


class LineCountMismatch(DomainError):
    pass


class PayloadTooLarge(DomainError):
    pass


class BadReferenceStore(DomainError):
    pass


class SubmitRequest(BaseModel):
    src: str
    tgt: str
    lines: list[str]


class SubmitResponse(BaseModel):
    id: str
    score: float
    signature: str
    submitted_at: str


class LeaderboardEntry(BaseModel):
    id: str
    score: float
    submitted_at: str


def _load_references(references_dir: str | Path) -> dict[str, list[str]]:
    references_dir = Path(references_dir)
    refs: dict[str, list[str]] = {}
    for path in sorted(references_dir.iterdir()):
        if not path.is_file() or path.suffix not in REFERENCE_SUFFIXES:
            continue
        code = path.name.split(".", 1)[0]
        refs[code] = path.read_text(encoding="utf-8").splitlines()
    if not refs:
        raise BadReferenceStore(f"no reference files under {references_dir}")
    counts = {len(lines) for lines in refs.values()}
    if len(counts) != 1:
        raise BadReferenceStore(
            f"reference files disagree on line count: {sorted(counts)}"
        )
    return refs


class SubmissionStore:
    """Append-only log of scored submissions with an in-memory index.

    All writes go through one lock; the log line carries the blob hash
    rather than the hypothesis text, so the log stays small and greppable.
    """

    def __init__(self, data_dir: str | Path) -> None:
        self.data_dir = Path(data_dir)
        self.blob_dir = self.data_dir / "blobs"
        self.log_path = self.data_dir / "submissions.jsonl"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.records: list[dict] = []
        if self.log_path.exists():
            for lineno, line in enumerate(
                self.log_path.read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                try:
                    self.records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise BadReferenceStore(
                        f"{self.log_path} line {lineno}: {exc}"
                    ) from exc

    def append(
        self, src: str, tgt: str, lines: list[str], score: float, signature: str
    ) -> dict:
        blob = "\n".join(lines) + ("\n" if lines else "")
        digest = hashlib.sha256(blob.encode("utf-8")).hexdigest()
        with self.lock:
            record = {
                "id": f"sub-{len(self.records):06d}-{digest[:8]}",
                "src": src,
                "tgt": tgt,
                "blob": digest,
                "score": score,
                "signature": signature,
                "submitted_at": datetime.now(timezone.utc).isoformat(),
            }
            blob_path = self.blob_dir / digest
            if not blob_path.exists():
                blob_path.write_text(blob, encoding="utf-8", newline="\n")
            with self.log_path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                fh.flush()
            self.records.append(record)
        return record

    def leaderboard(self, src: str, tgt: str) -> list[dict]:
        rows = [
            (index, r)
            for index, r in enumerate(self.records)
            if r["src"] == src and r["tgt"] == tgt
        ]
        rows.sort(key=lambda pair: (-pair[1]["score"], pair[1]["submitted_at"], pair[0]))
        return [
            {
                "id": r["id"],
                "score": r["score"],
                "submitted_at": r["submitted_at"],
            }
            for _, r in rows
        ]


def create_app(
    references_dir: str | Path,
    model_path: str | Path,
    data_dir: str | Path,
    max_payload: int = MAX_PAYLOAD,
) -> FastAPI:
    references = _load_references(references_dir)
    model = load_model(model_path)
    store = SubmissionStore(data_dir)
    app = FastAPI(title="hidden-reference scoring service")

    @app.exception_handler(DomainError)
    async def domain_error_handler(request: Request, exc: DomainError) -> JSONResponse:
        status = 413 if isinstance(exc, PayloadTooLarge) else 400
        return JSONResponse(status_code=status, content=exc.payload())

    @app.middleware("http")
    async def payload_cap(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > max_payload:
            err = PayloadTooLarge(
                f"payload {length} bytes exceeds cap {max_payload}"
            )
            return JSONResponse(status_code=413, content=err.payload())
        return await call_next(request)

    def check_direction(src: str, tgt: str) -> None:
        if src not in references or tgt not in references or src == tgt:
            raise UnsupportedDirection(f"direction {src}->{tgt} not served")

    @app.post("/v1/submissions", response_model=SubmitResponse)
    def submit(request: SubmitRequest) -> SubmitResponse:
        check_direction(request.src, request.tgt)
        ref_lines = references[request.tgt]
        if len(request.lines) != len(ref_lines):
            raise LineCountMismatch(
                f"expected {len(ref_lines)} lines, got {len(request.lines)}"
            )
        result: BleuScore = sp_bleu(model, request.lines, ref_lines, "corpus")
        record = store.append(
            request.src, request.tgt, request.lines, result.score, result.signature
        )
        return SubmitResponse(
            id=record["id"],
            score=record["score"],
            signature=record["signature"],
            submitted_at=record["submitted_at"],
        )

    @app.get("/v1/leaderboard", response_model=list[LeaderboardEntry])
    def leaderboard(src: str, tgt: str) -> list[LeaderboardEntry]:
        check_direction(src, tgt)
        return [LeaderboardEntry(**row) for row in store.leaderboard(src, tgt)]

    return app
