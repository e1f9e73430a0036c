"""HTTP service for live rating collection and model predictions.

Serves compositions to rate (initial round first, then the re-rate
queue), appends validated ratings to a JSONL log under a lock, reports
stats, and (when a model bundle is loaded) returns the predicted class
for a composition. The optional --ui directory is mounted at / for the
browser frontend.
"""
from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from . import features as feat
from . import pipeline as pl
from .learn import model_from_dict
from .scene import load_composition, rasterize
from .targets import (RATING_MAX, RATING_MIN, RatingRecord, initial_ratings,
                      load_ratings, merge_classes, rerate_queue)


class RatingsLog:
    """Append-only JSONL store with serialized writes."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> list[RatingRecord]:
        if not self.path.exists():
            return []
        return load_ratings(self.path)

    def append(self, record: RatingRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True) + "\n"
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())


class ModelBundle:
    """Serialized classifier plus the preprocessing needed to score a
    composition from scratch (d3 pipeline: plan + projections)."""

    def __init__(self, data: dict):
        if data.get("version") != 1:
            raise ValueError("unsupported bundle version")
        self.classes = data["classes"]
        self.plan = pl.TransformPlan.from_dict(data["plan"])
        proj = data["projection"]
        self.projection = pl.ProjectionModel(
            np.asarray(proj["mean"]), np.asarray(proj["pca_basis"]),
            np.asarray(proj["explained"]), np.asarray(proj["svd_basis"]))
        self.model = model_from_dict(data["model"])

    @staticmethod
    def to_dict(model_dict: dict, plan: pl.TransformPlan, projection: pl.ProjectionModel,
                classes) -> dict:
        return {
            "version": 1,
            "classes": list(classes),
            "plan": plan.to_dict(),
            "projection": {
                "mean": projection.mean.tolist(),
                "pca_basis": projection.pca_basis.tolist(),
                "explained": projection.explained.tolist(),
                "svd_basis": projection.svd_basis.tolist(),
            },
            "model": model_dict,
        }

    def predict(self, comp) -> tuple[str, list[float]]:
        raster = rasterize(comp)
        vec = feat.extract_handcrafted(comp, raster).values[None, :]
        polished = pl.apply_transform_plan(self.plan, vec)
        proj_block, _ = self.projection.apply(polished)
        X = np.hstack([polished, proj_block])
        scores = self.model.predict_scores(X)[0]
        label = self.classes[int(np.argmax(scores))]
        return label, [float(s) for s in scores]


def create_app(data_dir, subset_size: int = 300, rounds_target: int = 3,
               model_path=None, ui_dir=None) -> FastAPI:
    data_dir = Path(data_dir)
    comp_dir = data_dir / "compositions"
    if not comp_dir.exists():
        comp_dir = data_dir
    log = RatingsLog(data_dir / "ratings.jsonl")
    known_ids = sorted(p.stem for p in comp_dir.glob("*.json")) if comp_dir.exists() else []
    known = set(known_ids)
    bundle = None
    if model_path is not None and Path(model_path).exists():
        with open(model_path) as fh:
            bundle = ModelBundle(json.load(fh))

    app = FastAPI(title="harmonylab rating service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.log = log
    app.state.bundle = bundle

    def _records():
        return log.load()

    def _next_unrated(rater: str):
        rated = {r.composition_id for r in _records()
                 if r.rater_id == rater and r.round == 0}
        for comp_id in known_ids:
            if comp_id not in rated:
                return comp_id
        return None

    def _next_rerate(rater: str):
        records = [r for r in _records() if r.rater_id == rater]
        queue = rerate_queue(records, subset_size, rounds_target)
        if not queue:
            return None, None
        comp_id = queue[0]
        done = {r.round for r in records if r.composition_id == comp_id}
        return comp_id, len(done)

    def _payload(comp_id: str, round_no: int, mode: str):
        return {"id": comp_id, "round": round_no, "mode": mode,
                "image_url": f"/api/compositions/{comp_id}/image"}

    @app.get("/api/session/next")
    def session_next(rater: str = "default"):
        comp_id = _next_unrated(rater)
        if comp_id is not None:
            return _payload(comp_id, 0, "initial")
        comp_id, round_no = _next_rerate(rater)
        if comp_id is not None:
            return _payload(comp_id, round_no, "rerate")
        raise HTTPException(status_code=404, detail="nothing left to rate")

    @app.get("/api/rerate/next")
    def rerate_next(rater: str = "default"):
        comp_id, round_no = _next_rerate(rater)
        if comp_id is None:
            raise HTTPException(status_code=404, detail="re-rate queue is empty")
        return _payload(comp_id, round_no, "rerate")

    @app.get("/api/compositions/{comp_id}/image")
    def composition_image(comp_id: str):
        png = comp_dir / f"{comp_id}.png"
        if comp_id not in known or not png.exists():
            raise HTTPException(status_code=404, detail=f"unknown composition {comp_id}")
        return Response(content=png.read_bytes(), media_type="image/png")

    @app.post("/api/ratings", status_code=201)
    def post_rating(body: dict):
        comp_id = body.get("composition_id")
        rating = body.get("rating")
        round_no = int(body.get("round", 0))
        rater = body.get("rater_id", "default")
        if comp_id not in known:
            raise HTTPException(status_code=404, detail=f"unknown composition {comp_id}")
        if not isinstance(rating, int) or not RATING_MIN <= rating <= RATING_MAX:
            raise HTTPException(status_code=400,
                                detail=f"rating must be an integer in "
                                       f"{RATING_MIN}..{RATING_MAX}")
        if round_no < 0:
            raise HTTPException(status_code=400, detail="round must be >= 0")
        for rec in _records():
            if (rec.composition_id, rec.rater_id, rec.round) == (comp_id, rater, round_no):
                raise HTTPException(status_code=409,
                                    detail="this (composition, rater, round) is already rated")
        record = RatingRecord(comp_id, rating, round_no, rater,
                              float(body.get("timestamp", time.time())))
        log.append(record)
        return record.to_dict()

    @app.get("/api/stats")
    def stats(rater: str | None = None):
        records = _records()
        if rater is not None:
            records = [r for r in records if r.rater_id == rater]
        by_class = {str(c): 0 for c in range(RATING_MIN, RATING_MAX + 1)}
        by_round: dict[str, int] = {}
        for rec in records:
            by_class[str(rec.rating)] += 1
            by_round[str(rec.round)] = by_round.get(str(rec.round), 0) + 1
        merged = {"Bad": 0, "Neutral": 0, "Good": 0}
        for comp_id, rating in initial_ratings(records).items():
            merged[merge_classes(rating)] += 1
        return {"total": len(records), "compositions": len(known_ids),
                "by_class": by_class, "by_round": by_round, "merged": merged}

    @app.get("/api/predict/{comp_id}")
    def predict(comp_id: str):
        if app.state.bundle is None:
            raise HTTPException(status_code=404, detail="no model loaded")
        path = comp_dir / f"{comp_id}.json"
        if comp_id not in known or not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown composition {comp_id}")
        label, scores = app.state.bundle.predict(load_composition(path))
        return {"id": comp_id, "label": label,
                "scores": dict(zip(app.state.bundle.classes, scores))}

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def serve(port: int, data_dir, subset_size: int = 300, rounds_target: int = 3,
          model_path=None, ui_dir=None, host: str = "127.0.0.1") -> None:
    import uvicorn
    app = create_app(data_dir, subset_size, rounds_target, model_path, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
