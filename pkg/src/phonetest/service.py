"""HTTP service that administers the curated 2AFC test to a human
listener: session creation, stimulus audio, response capture, and
closer-mean classification against the stored NH/HL reference means.

State is in-memory per process; every event is also appended to a
JSON-lines file so results survive restarts (desk-scale persistence,
no database).
"""
from __future__ import annotations

import argparse
import json
import secrets
import sys
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .curation import CandidatePair, read_battery
from .diagnostics import reference_means, classify_human, _derive_seed
from .dsp import (
    Audiogram,
    MixSpec,
    apply_filter,
    builtin_audiogram,
    design_hl_filter,
    gen_pink_noise,
    mix_at_snr,
    read_wav,
    rms_normalize,
    wav_bytes,
)


class SessionRequest(BaseModel):
    n_items: int = Field(gt=0)
    snr_db: float | None = None
    hl_sim: bool = False
    seed: int | None = None


class ResponseBody(BaseModel):
    chosen: str
    latency_ms: float | None = Field(default=None, ge=0)
    replays: int = Field(default=0, ge=0)


class _Session:
    def __init__(
        self,
        session_id: str,
        seed: int,
        snr_db: float,
        hl_sim: bool,
        items: list[CandidatePair],
        nh_mean: float,
        hl_mean: float,
    ) -> None:
        self.id = session_id
        self.seed = seed
        self.snr_db = snr_db
        self.hl_sim = hl_sim
        self.items = items
        self.nh_mean = nh_mean
        self.hl_mean = hl_mean
        self.responses: dict[int, dict] = {}
        self.audio_cache: dict[int, bytes] = {}
        self.created_at = _now()

    @property
    def finished(self) -> bool:
        return len(self.responses) == len(self.items)

    def options(self, trial: int) -> tuple[str, str]:
        """Left/right order for one trial, fixed by the session seed."""
        item = self.items[trial]
        rng = np.random.default_rng([self.seed, trial])
        if rng.random() < 0.5:
            return item.target, item.distractor
        return item.distractor, item.target


def build_app(
    battery: Sequence[CandidatePair],
    corpus: Mapping[str, Path],
    diagnostics_path: str | Path,
    default_snr_db: float = 10.0,
    hl_audiogram: Audiogram | None = None,
    output_dir: str | Path | None = None,
    sample_rate: int = 16000,
    cors_origins: Sequence[str] = ("*",),
) -> FastAPI:
    battery = list(battery)
    if not battery:
        raise ValueError("battery is empty")
    for item in battery:
        wav = corpus.get(item.target)
        if wav is None or not Path(wav).exists():
            raise ValueError(f"no corpus audio for battery target {item.target!r}")
    # fail at startup, not mid-session: classification needs these means
    reference_means(diagnostics_path, default_snr_db)

    hl_coeffs = (
        design_hl_filter(hl_audiogram, sample_rate) if hl_audiogram is not None else None
    )
    log_path = Path(output_dir) / "sessions.jsonl" if output_dir else None
    if log_path:
        log_path.parent.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="phonetest service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, _Session] = {}
    lock = threading.Lock()
    app.state.sessions = sessions

    def log_event(event: dict) -> None:
        if log_path is None:
            return
        with lock:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def get_session(session_id: str) -> _Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    def get_trial(session: _Session, trial: int, answered_ok: bool) -> CandidatePair:
        if session.finished and not answered_ok:
            raise HTTPException(410, "session is finished")
        if not 0 <= trial < len(session.items):
            raise HTTPException(404, f"trial {trial} out of range")
        return session.items[trial]

    @app.get("/api/health")
    def health() -> dict:
        return {
            "status": "ok",
            "battery_items": len(battery),
            "snr_db": default_snr_db,
            "hl_sim_available": hl_coeffs is not None,
        }

    @app.post("/api/sessions")
    def create_session(body: SessionRequest) -> dict:
        if body.n_items > len(battery):
            raise HTTPException(
                422, f"n_items {body.n_items} exceeds battery size {len(battery)}"
            )
        snr_db = default_snr_db if body.snr_db is None else body.snr_db
        try:
            nh_mean, hl_mean = reference_means(diagnostics_path, snr_db)
        except ValueError:
            raise HTTPException(
                422, f"no reference diagnostics at SNR {snr_db} dB"
            )
        if body.hl_sim and hl_coeffs is None:
            raise HTTPException(422, "service started without an HL profile")

        seed = body.seed if body.seed is not None else secrets.randbits(32)
        rng = np.random.default_rng(seed)
        subset = rng.choice(len(battery), size=body.n_items, replace=False)
        session = _Session(
            session_id=uuid.uuid4().hex[:12],
            seed=int(seed),
            snr_db=snr_db,
            hl_sim=body.hl_sim,
            items=[battery[int(i)] for i in subset],
            nh_mean=nh_mean,
            hl_mean=hl_mean,
        )
        with lock:
            sessions[session.id] = session
        log_event(
            {
                "event": "session_created",
                "session_id": session.id,
                "created_at": session.created_at,
                "n_items": body.n_items,
                "snr_db": snr_db,
                "hl_sim": body.hl_sim,
                "seed": session.seed,
            }
        )
        return {"session_id": session.id, "n_items": body.n_items, "snr_db": snr_db}

    @app.get("/api/sessions/{session_id}/trials/{trial}")
    def trial_options(session_id: str, trial: int) -> dict:
        session = get_session(session_id)
        get_trial(session, trial, answered_ok=False)
        option_a, option_b = session.options(trial)
        return {
            "trial": trial,
            "total": len(session.items),
            "option_a": option_a,
            "option_b": option_b,
        }

    @app.get("/api/sessions/{session_id}/trials/{trial}/audio")
    def trial_audio(session_id: str, trial: int) -> Response:
        session = get_session(session_id)
        item = get_trial(session, trial, answered_ok=False)
        with lock:
            cached = session.audio_cache.get(trial)
        if cached is None:
            speech = rms_normalize(
                read_wav(corpus[item.target], target_rate=sample_rate), -20.0
            )
            spec = MixSpec(snr_db=session.snr_db)
            noise = gen_pink_noise(
                speech.duration_s + 2 * spec.lead_in_s,
                sample_rate,
                _derive_seed(session.seed, f"noise|{trial}"),
            )
            mixed = mix_at_snr(speech, noise, spec)
            if session.hl_sim:
                mixed = apply_filter(mixed, hl_coeffs)
            cached = wav_bytes(mixed)
            with lock:
                session.audio_cache[trial] = cached
        log_event(
            {
                "event": "audio_served",
                "session_id": session.id,
                "trial": trial,
                "at": _now(),
            }
        )
        return Response(content=cached, media_type="audio/wav")

    @app.post("/api/sessions/{session_id}/trials/{trial}/response")
    def submit_response(session_id: str, trial: int, body: ResponseBody) -> dict:
        session = get_session(session_id)
        item = get_trial(session, trial, answered_ok=True)
        with lock:
            if trial in session.responses:
                raise HTTPException(409, f"trial {trial} already answered")
            option_a, option_b = session.options(trial)
            if body.chosen not in (option_a, option_b):
                raise HTTPException(
                    422, f"chosen word {body.chosen!r} is not one of the options"
                )
            correct = body.chosen == item.target
            session.responses[trial] = {
                "chosen": body.chosen,
                "correct": correct,
                "latency_ms": body.latency_ms,
                "replays": body.replays,
            }
            finished = session.finished
            n_correct = sum(r["correct"] for r in session.responses.values())
        log_event(
            {
                "event": "response",
                "session_id": session.id,
                "trial": trial,
                "chosen": body.chosen,
                "correct": correct,
                "latency_ms": body.latency_ms,
                "replays": body.replays,
                "at": _now(),
            }
        )
        if not finished:
            unanswered = min(
                i for i in range(len(session.items)) if i not in session.responses
            )
            return {"next_trial": unanswered}

        score_pct = 100.0 * n_correct / len(session.items)
        category = classify_human(score_pct, session.nh_mean, session.hl_mean)
        result = {
            "score_pct": score_pct,
            "nh_mean": session.nh_mean,
            "hl_mean": session.hl_mean,
            "category": category,
        }
        log_event(
            {
                "event": "session_finished",
                "session_id": session.id,
                "at": _now(),
                **result,
            }
        )
        return {"result": result}

    return app


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_corpus_map(manifest_path: str | Path) -> dict[str, Path]:
    from .config import read_corpus_manifest

    return dict(read_corpus_manifest(manifest_path))


def app_from_pipeline(cfg) -> FastAPI:
    """Build the app on artifacts a pipeline run left behind."""
    from .pipeline import PipelineError, _hl_audiogram, _stage_dir

    battery_path = _stage_dir(cfg, "curate") / "battery.csv"
    diagnostics_path = _stage_dir(cfg, "assess") / "diagnostics.csv"
    if not battery_path.exists():
        raise PipelineError("no battery artifact; run curate first")
    if not diagnostics_path.exists():
        raise PipelineError("no diagnostics artifact; run assess first")
    return build_app(
        battery=read_battery(battery_path),
        corpus=_load_corpus_map(cfg.corpus_manifest),
        diagnostics_path=diagnostics_path,
        default_snr_db=cfg.analysis_snr,
        hl_audiogram=_hl_audiogram(cfg),
        output_dir=Path(cfg.output_dir) / "service",
        sample_rate=cfg.sample_rate,
    )


def serve_from_pipeline(cfg, port: int = 8000, host: str = "127.0.0.1") -> None:
    """Start the service on artifacts a pipeline run left behind."""
    import uvicorn

    uvicorn.run(app_from_pipeline(cfg), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="phonetest-serve",
        description="Serve the 2AFC listening test over HTTP.",
    )
    parser.add_argument("--battery", required=True, help="curated battery CSV")
    parser.add_argument(
        "--diagnostics", required=True, help="item diagnostics CSV (reference means)"
    )
    parser.add_argument(
        "--corpus", required=True, help="corpus manifest CSV (word,wav_path)"
    )
    parser.add_argument("--snr", type=float, default=10.0, help="default SNR in dB")
    parser.add_argument(
        "--hl-sim",
        help="audiogram JSON path or builtin profile name to offer HL simulation",
    )
    parser.add_argument("--output-dir", default=".", help="where sessions.jsonl goes")
    parser.add_argument("--sample-rate", type=int, default=16000)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)

    audiogram = None
    if args.hl_sim:
        if Path(args.hl_sim).exists():
            audiogram = Audiogram.from_json(args.hl_sim)
        else:
            audiogram = builtin_audiogram(args.hl_sim)

    try:
        app = build_app(
            battery=read_battery(args.battery),
            corpus=_load_corpus_map(args.corpus),
            diagnostics_path=args.diagnostics,
            default_snr_db=args.snr,
            hl_audiogram=audiogram,
            output_dir=args.output_dir,
            sample_rate=args.sample_rate,
        )
    except (OSError, ValueError) as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
