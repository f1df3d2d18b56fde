"""HTTP/JSON API around the solver: submit a job, poll it, query the grid.

Jobs run on a small worker pool and live in memory for the life of the
process.  Validation is synchronous so a bad request never occupies a worker:
expression errors come back as 400 with field-level offsets, stability
violations as 422 with the margin.
"""

from __future__ import annotations

import threading
import time
import uuid
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .density import Delta1TooSmall, central_difference_density, smooth_density
from .expr import ExpressionError, ExpressionSyntaxError, parse
from .model import (
    CdfGrid,
    ControlDensity,
    Mesh,
    TimeGrid,
    grid_to_csv,
    grid_to_json_dict,
    segment_kernel,
)
from .solver import MassLeakWarning, SolveConfig, stability_check
from .transforms import compose_piecewise

_NUMBER_FIELDS = ("T", "delta", "h", "x_max")


@dataclass
class Job:
    """One solve request; the result is written exactly once by its worker."""

    id: str
    config: dict
    status: str = "pending"  # pending | running | done | failed
    grid: CdfGrid | None = None
    error: str | None = None
    submitted: float = field(default_factory=time.time)
    wall_time: float | None = None


def _field_error(name: str, message: str, offset: int | None = None) -> dict:
    entry = {"field": name, "message": message}
    if offset is not None:
        entry["offset"] = offset
    return entry


def _validate(body: dict) -> tuple[dict | None, list[dict], float]:
    """Check a solve request; returns (config, errors, stability margin)."""
    errors = []
    if not isinstance(body, dict):
        return None, [_field_error("body", "expected a JSON object")], 0.0

    for name in ("g", "n"):
        value = body.get(name)
        if not isinstance(value, str) or not value.strip():
            errors.append(_field_error(name, "expected a non-empty expression string"))
            continue
        try:
            parse(value)
        except ExpressionSyntaxError as exc:
            errors.append(_field_error(name, str(exc), getattr(exc, "offset", None)))
        except ExpressionError as exc:
            errors.append(_field_error(name, str(exc)))

    numbers = {}
    for name in _NUMBER_FIELDS:
        value = body.get(name)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            errors.append(_field_error(name, "expected a number"))
        elif not value > 0.0:
            errors.append(_field_error(name, f"must be positive, got {value:g}"))
        else:
            numbers[name] = float(value)
    if errors:
        return None, errors, 0.0

    try:
        n = ControlDensity(body["n"], t_hi=numbers["T"])
    except ValueError as exc:
        return None, [_field_error("n", str(exc))], 0.0
    margin = stability_check(numbers["h"], n.n_star)

    config = dict(numbers)
    config["g"] = body["g"]
    config["n"] = body["n"]
    config["atom_pinning"] = bool(body.get("atom_pinning", False))
    return config, [], margin


def _choose_mesh(g: str, T: float, delta: float, x_max: float) -> Mesh:
    from .cli import _choose_mesh as choose

    return choose(segment_kernel(g, T), delta, x_max)


def _run_job(job: Job) -> None:
    job.status = "running"
    started = time.perf_counter()
    try:
        cfg_d = job.config
        n = ControlDensity(cfg_d["n"], t_hi=cfg_d["T"])
        mesh = _choose_mesh(cfg_d["g"], cfg_d["T"], cfg_d["delta"], cfg_d["x_max"])
        cfg = SolveConfig(
            mesh,
            TimeGrid(cfg_d["h"], cfg_d["T"]),
            atom_pinning=cfg_d["atom_pinning"],
        )
        with warnings.catch_warnings():
            warnings.simplefilter("error", MassLeakWarning)
            grid = compose_piecewise(cfg_d["g"], n, cfg_d["T"], cfg)
        job.grid = grid
        job.wall_time = time.perf_counter() - started
        job.status = "done"
    except Exception as exc:  # job errors surface via the status endpoint
        job.error = f"{type(exc).__name__}: {exc}"
        job.wall_time = time.perf_counter() - started
        job.status = "failed"


def create_app() -> FastAPI:
    app = FastAPI(title="poissonint")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    jobs: dict[str, Job] = {}
    lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=4)
    app.state.jobs = jobs
    app.state.executor = executor

    def _lookup(job_id: str) -> Job | None:
        with lock:
            return jobs.get(job_id)

    def _not_done(job: Job | None) -> JSONResponse | None:
        if job is None:
            return JSONResponse({"detail": "unknown job id"}, status_code=404)
        if job.status != "done":
            return JSONResponse(
                {"detail": f"job is {job.status}", "status": job.status},
                status_code=409,
            )
        return None

    @app.post("/solve", status_code=202)
    async def solve(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse(
                {"errors": [_field_error("body", "invalid JSON")]}, status_code=400
            )
        config, errors, margin = _validate(body)
        if errors:
            return JSONResponse({"errors": errors}, status_code=400)
        if margin <= 0.0:
            return JSONResponse(
                {
                    "detail": "stability violated: h * sup(n) >= 1",
                    "margin": margin,
                },
                status_code=422,
            )
        job = Job(id=uuid.uuid4().hex, config=config)
        with lock:
            jobs[job.id] = job
        executor.submit(_run_job, job)
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    async def job_status(job_id: str):
        job = _lookup(job_id)
        if job is None:
            return JSONResponse({"detail": "unknown job id"}, status_code=404)
        payload = {"job_id": job.id, "status": job.status, "config": job.config}
        if job.status == "done":
            grid = job.grid
            payload["mesh"] = {
                "delta": grid.mesh.delta,
                "x_min": grid.mesh.x_min,
                "x_max": grid.mesh.x_max,
            }
            payload["atoms"] = [{"x": loc, "mass": mass} for loc, mass in grid.atoms]
            payload["mass_captured"] = grid.mass_captured
            payload["wall_time"] = job.wall_time
        elif job.status == "failed":
            payload["error"] = job.error
        return payload

    @app.get("/jobs/{job_id}/grid")
    async def job_grid(job_id: str):
        job = _lookup(job_id)
        bounce = _not_done(job)
        if bounce is not None:
            return bounce
        return grid_to_json_dict(
            job.grid, meta={"job_id": job.id, "mass_captured": job.grid.mass_captured}
        )

    @app.get("/jobs/{job_id}/csv")
    async def job_csv(job_id: str):
        job = _lookup(job_id)
        bounce = _not_done(job)
        if bounce is not None:
            return bounce
        return Response(content=grid_to_csv(job.grid), media_type="text/csv")

    @app.get("/jobs/{job_id}/cdf")
    async def job_cdf(job_id: str, x: float):
        job = _lookup(job_id)
        bounce = _not_done(job)
        if bounce is not None:
            return bounce
        grid = job.grid
        return {
            "x": x,
            "F": grid.value_at(x),
            "truncated": x > grid.mesh.x_max,
        }

    @app.get("/jobs/{job_id}/quantile")
    async def job_quantile(job_id: str, p: float):
        job = _lookup(job_id)
        bounce = _not_done(job)
        if bounce is not None:
            return bounce
        if not 0.0 <= p <= 1.0:
            return JSONResponse(
                {"detail": f"p must lie in [0, 1], got {p:g}"}, status_code=400
            )
        grid = job.grid
        return {
            "p": p,
            "x": grid.quantile(p),
            "truncated": p > float(grid.values[-1]),
        }

    @app.get("/jobs/{job_id}/density")
    async def job_density(job_id: str, window: float | None = None, delta1: float | None = None):
        job = _lookup(job_id)
        bounce = _not_done(job)
        if bounce is not None:
            return bounce
        try:
            density = central_difference_density(job.grid, delta1)
            if window is not None:
                density = smooth_density(density, window)
        except (Delta1TooSmall, ValueError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        return {
            "mesh": {
                "delta": density.mesh.delta,
                "x_min": density.mesh.x_min,
                "x_max": density.mesh.x_max,
            },
            "values": density.values.tolist(),
            "atoms": [{"x": loc, "mass": mass} for loc, mass in density.atoms],
            "delta1": density.delta1,
            "clamped_mass": density.clamped_mass,
        }

    return app
