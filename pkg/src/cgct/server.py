"""HTTP service over a trained model and one evaluation-year panel.

All endpoints are pure reads over immutable state loaded at startup, so
identical requests return identical bodies (the allocation solve runs with
a fixed seed). Aid values cross the API in USD millions; outcomes are
fractions. Every error body is structured as {code, stage, message}.

    GET  /api/countries
    GET  /api/curve/{country}?min&max&points
    POST /api/whatif    {country, aid}
    POST /api/allocate  {budget?, bound?, pins?, iteration_cap?}
    GET  /api/model
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .allocation import AllocationProblem, expected_infections, optimize_allocation
from .data import Dataset
from .pipeline import CgCtModel


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    cors_origins: list = field(default_factory=list)
    max_points: int = 1025
    allocate_max_iter: int = 2000
    allocate_seed: int = 0


class WhatIfRequest(BaseModel):
    country: str
    aid: float


class AllocateRequest(BaseModel):
    budget: float | None = None
    bound: float | None = None
    pins: dict[str, float] = {}
    iteration_cap: int | None = None


def _error(status, stage, message):
    return HTTPException(status_code=status,
                         detail={"code": status, "stage": stage,
                                 "message": str(message)})


def create_app(model: CgCtModel | None, dataset: Dataset | None,
               config: ApiConfig | None = None) -> FastAPI:
    config = config or ApiConfig()
    app = FastAPI(title="aid-response service", version="1")
    if config.cors_origins:
        app.add_middleware(CORSMiddleware, allow_origins=config.cors_origins,
                           allow_methods=["*"], allow_headers=["*"])

    state = {"model": model, "dataset": dataset}
    if model is not None and dataset is not None:
        aid = dataset.treatments()
        state["bound"] = float(aid.max() + aid.std(ddof=1))

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {
            "code": exc.status_code, "stage": "request", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "code": 400, "stage": "request", "message": str(exc.errors())})

    def require_state():
        if state["model"] is None or state["dataset"] is None:
            raise _error(503, "startup", "model not loaded")
        return state["model"], state["dataset"]

    def find_record(dataset, country):
        try:
            return dataset.record_for(country)
        except KeyError:
            raise _error(404, "lookup", f"unknown country {country!r}")

    def curve_payload(model, dataset, record, lo, hi, points):
        if points < 2 or points > config.max_points:
            raise _error(422, "curve",
                         f"points must be in [2, {config.max_points}]")
        bound = state["bound"]
        if not (0.0 <= lo < hi <= bound + 1e-9):
            raise _error(422, "curve",
                         f"range must satisfy 0 <= min < max <= {bound:.3f}")
        grid = np.linspace(lo, hi, points)
        curve = model.predict_curve(record.covariates, grid,
                                    country_id=record.country_id,
                                    max_treatment=bound)
        return {"country": record.country_id,
                "treatments": curve.treatments.tolist(),
                "predictions": curve.predictions.tolist(),
                "observed_aid": record.treatment_a,
                "bound": bound}

    @app.get("/api/countries")
    def countries():
        model, dataset = require_state()
        out = []
        for r in dataset.records:
            out.append({"id": r.country_id,
                        "observed_aid": r.treatment_a,
                        "infection_rate_per_1k": r.infection_rate_r * 1000.0,
                        "population": r.population_p})
        return {"year": dataset.year, "bound": state["bound"],
                "total_aid": float(dataset.treatments().sum()),
                "countries": out}

    @app.get("/api/curve/{country}")
    def curve(country: str, min: float = 0.0, max: float | None = None,
              points: int = 65):
        model, dataset = require_state()
        record = find_record(dataset, country)
        hi = state["bound"] if max is None else max
        return curve_payload(model, dataset, record, min, hi, points)

    @app.post("/api/whatif")
    def whatif(req: WhatIfRequest):
        model, dataset = require_state()
        record = find_record(dataset, req.country)
        bound = state["bound"]
        if not 0.0 <= req.aid <= bound + 1e-9:
            raise _error(422, "whatif",
                         f"aid {req.aid} outside [0, {bound:.3f}] USD millions")
        point = float(model.predict_curve(record.covariates,
                                          [req.aid], country_id=req.country,
                                          max_treatment=bound).predictions[0])
        observed = float(model.predict_curve(
            record.covariates, [record.treatment_a], country_id=req.country,
            max_treatment=max(bound, record.treatment_a)).predictions[0])
        payload = curve_payload(model, dataset, record, 0.0, bound, 65)
        return {"country": req.country, "aid": req.aid, "prediction": point,
                "observed_aid": record.treatment_a,
                "observed_prediction": observed,
                "delta": point - observed,
                "curve": payload}

    @app.post("/api/allocate")
    def allocate(req: AllocateRequest):
        model, dataset = require_state()
        try:
            problem = AllocationProblem.from_dataset(
                dataset, budget=req.budget,
                bound=req.bound if req.bound is not None else state["bound"],
                pins=req.pins)
        except ValueError as exc:
            raise _error(422, "allocate", exc)
        cap = min(req.iteration_cap or config.allocate_max_iter,
                  config.allocate_max_iter)
        current = expected_infections(model, problem.observed_aid, problem)
        plan = optimize_allocation(model, problem, seed=config.allocate_seed,
                                   max_iter=cap)
        return {"plan": plan.to_dict(),
                "current_expected_infections": current,
                "suggested_expected_infections": plan.objective,
                "reduction": current - plan.objective,
                "reduction_pct": 100.0 * (current - plan.objective) / current,
                "observed_aid": problem.observed_aid.tolist(),
                "delta": (plan.aid - problem.observed_aid).tolist(),
                "total_suggested": float(plan.aid.sum()),
                "budget": problem.budget}

    @app.get("/api/model")
    def model_info():
        model, dataset = require_state()
        return {"inference": model.inference,
                "flags": model.flags.to_dict(),
                "hyperparams": model.hp.to_dict(),
                "metadata": model.metadata,
                "dataset_year": dataset.year,
                "bound": state["bound"]}

    return app
