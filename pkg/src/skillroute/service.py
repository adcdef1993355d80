"""HTTP service exposing predict, route, fleet, and assignment operations.

The loaded model is immutable for the process lifetime; fleet mutations funnel
through the fleet module's single-writer lock and are journaled, so a restart
with the same fleet file and journal reproduces the same snapshot. Request and
response bodies carry exactly the documented fields.
"""

from __future__ import annotations

import logging
from typing import Sequence

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from skillroute.config import ServiceConfig
from skillroute.core import ArgumentError, SkillrouteError, SkillVector, ValidationError
from skillroute.fleet import (
    ConflictError,
    FleetState,
    NotFoundError,
    RobotSpec,
    StateError,
    route_task,
)
from skillroute.model import EnsembleModel, MemberModel, load_bundle

logger = logging.getLogger(__name__)


class PredictRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    text: str


class RobotRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    id: str
    type: str = ""
    skills: list[str]
    available: bool = True


def load_models(bundle_paths: Sequence[str]):
    """One path loads as-is; several member bundles compose into an ensemble."""
    if not bundle_paths:
        raise ArgumentError("at least one model bundle path is required")
    models = [load_bundle(path) for path in bundle_paths]
    if len(models) == 1:
        return models[0]
    members: list[MemberModel] = []
    for model in models:
        if isinstance(model, EnsembleModel):
            members.extend(model.members)
        else:
            members.append(model)
    return EnsembleModel(members=members)


def create_app(
    config: ServiceConfig,
    model=None,
    fleet: FleetState | None = None,
) -> FastAPI:
    """Build the service; pass ``model``/``fleet`` directly to skip file loading."""
    if model is None:
        model = load_models(config.bundles)
    if fleet is None:
        if not config.fleet_path:
            raise ArgumentError("a fleet file path is required")
        fleet = FleetState.load(config.fleet_path, config.journal_path)

    app = FastAPI(title="skillroute", docs_url=None, redoc_url=None)
    app.state.model = model
    app.state.fleet = fleet
    app.state.config = config

    @app.middleware("http")
    async def limit_body_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > config.request_limit_bytes:
            return JSONResponse(
                status_code=413,
                content={"error": f"request body exceeds {config.request_limit_bytes} bytes"},
            )
        return await call_next(request)

    @app.exception_handler(SkillrouteError)
    async def domain_error(request: Request, err: SkillrouteError):
        if isinstance(err, NotFoundError):
            status = 404
        elif isinstance(err, (ConflictError, StateError)):
            status = 409
        else:
            status = 400
        body = {"error": str(err)}
        violations = getattr(err, "violations", None)
        if violations:
            body["violations"] = list(violations)
        return JSONResponse(status_code=status, content=body)

    @app.get("/v1/healthz")
    async def healthz():
        return {"status": "ok", "model": model.name}

    @app.post("/v1/predict")
    async def predict(body: PredictRequest):
        if not body.text.strip():
            raise ValidationError("text must be non-empty")
        result = model.predict(body.text)
        return {
            "skills": result.skills.to_mapping(),
            "probabilities": list(result.probabilities),
            "model": model.name,
        }

    @app.post("/v1/route")
    async def route(body: PredictRequest):
        if not body.text.strip():
            raise ValidationError("text must be non-empty")
        decision = route_task(
            body.text, model, fleet, review_threshold=config.review_threshold
        )
        return decision.to_dict()

    @app.get("/v1/fleet")
    async def fleet_snapshot():
        return {"robots": [robot.to_dict() for robot in fleet.robots()]}

    @app.post("/v1/fleet/robots", status_code=201)
    async def add_robot(body: RobotRequest):
        robot = RobotSpec(
            id=body.id,
            type=body.type,
            skills=SkillVector.from_names(body.skills),
            available=body.available,
        )
        fleet.add_robot(robot)
        return robot.to_dict()

    @app.delete("/v1/fleet/robots/{robot_id}")
    async def remove_robot(robot_id: str):
        fleet.remove_robot(robot_id)
        return {"removed": robot_id}

    @app.post("/v1/assignments/{assignment_id}/confirm")
    async def confirm(assignment_id: str):
        return fleet.confirm(assignment_id).to_dict()

    @app.post("/v1/assignments/{assignment_id}/release")
    async def release(assignment_id: str):
        return fleet.release(assignment_id).to_dict()

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted; aborts at startup on load failures."""
    import uvicorn  # imported here so library users never pay for it

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level=config.log_level)
