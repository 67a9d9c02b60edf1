"""HTTP + JSON API. Errors are JSON {code, message, details}.

Device-scoped routes require the device's bearer token. The firmware
endpoint returns the raw TBND bytes (CRC-verifiable by the device) with
the version in the X-Bundle-Version header, or 204 when up to date.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..errors import JobAlreadyActive
from ..signal import (
    WINDOW_LEN,
    Recording,
    make_windows,
    resample,
)
from .config import ServerConfig
from .store import Store
from .worker import start_job_thread


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details: dict | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.details = details or {}


class CreateUser(BaseModel):
    name: str = Field(min_length=1)


class CreateDevice(BaseModel):
    owner_user_id: str
    idempotency_key: str | None = None


class AddClass(BaseModel):
    class_name: str = Field(min_length=1)


class UploadRecording(BaseModel):
    class_name: str = Field(min_length=1)
    rate_hz: float = Field(gt=0)
    samples: list[list[float]]
    idempotency_key: str | None = None


class PostInference(BaseModel):
    timestamp: float
    class_name: str
    confidence: float = Field(ge=0.0, le=1.0)
    model_version: int = Field(ge=0)


def create_app(config: ServerConfig) -> FastAPI:
    app = FastAPI(title="tinyfit server")
    store = Store(config.db_path)
    app.state.store = store
    app.state.config = config

    @app.exception_handler(ApiError)
    async def handle_api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "details": exc.details},
        )

    def require_device(device_id: str, authorization: str | None, need_link=True):
        device = store.get_device(device_id)
        if device is None:
            raise ApiError(404, "not_found", f"unknown device {device_id}")
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:].strip()
        if token != device["token"]:
            raise ApiError(401, "unauthorized", "missing or wrong device token")
        if need_link and not device["linked"]:
            raise ApiError(409, "not_linked", "device is not linked")
        return device

    # --- accounts and devices ---

    @app.post("/api/users", status_code=201)
    def register_user(body: CreateUser):
        user_id = store.create_user(body.name)
        return {"user_id": user_id, "name": body.name}

    @app.get("/api/users/{user_id}")
    def get_user(user_id: str):
        user = store.get_user(user_id)
        if user is None:
            raise ApiError(404, "not_found", f"unknown user {user_id}")
        user["devices"] = store.list_devices(user_id)
        for dev in user["devices"]:
            dev.pop("token", None)
        return user

    @app.post("/api/devices", status_code=201)
    def register_device(body: CreateDevice):
        if store.get_user(body.owner_user_id) is None:
            raise ApiError(404, "not_found", f"unknown user {body.owner_user_id}")
        result = store.create_device(body.owner_user_id, body.idempotency_key)
        return {"device_id": result["device_id"], "token": result["token"]}

    @app.post("/api/devices/{device_id}/link")
    def link_device(device_id: str, authorization: str | None = Header(default=None)):
        require_device(device_id, authorization, need_link=False)
        store.link_device(device_id)  # idempotent
        return device_overview(device_id, authorization)

    @app.get("/api/devices/{device_id}")
    def device_overview(device_id: str, authorization: str | None = Header(default=None)):
        device = require_device(device_id, authorization, need_link=False)
        return {
            "device_id": device_id,
            "linked": device["linked"],
            "bundle_version": device["bundle_version"],
            "classes": store.window_counts(device_id),
            "latest_job": store.latest_job(device_id),
        }

    # --- data upload ---

    @app.post("/api/devices/{device_id}/classes", status_code=201)
    def add_class(
        device_id: str,
        body: AddClass,
        authorization: str | None = Header(default=None),
    ):
        require_device(device_id, authorization)
        store.add_class(device_id, body.class_name)
        return {"classes": store.device_classes(device_id)}

    @app.post("/api/devices/{device_id}/recordings", status_code=201)
    def upload_recording(
        device_id: str,
        body: UploadRecording,
        authorization: str | None = Header(default=None),
    ):
        require_device(device_id, authorization)
        if body.idempotency_key is not None:
            existing = store.find_recording(device_id, body.idempotency_key)
            if existing is not None:
                return existing

        arr = np.asarray(body.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 7:
            raise ApiError(
                400, "bad_samples",
                "each sample must be [t, ax, ay, az, gx, gy, gz]",
            )
        if not np.all(np.isfinite(arr)):
            raise ApiError(400, "bad_samples", "samples contain non-finite values")
        if np.any(np.diff(arr[:, 0]) < 0):
            raise ApiError(400, "bad_samples", "timestamps must be non-decreasing")
        if arr.shape[0] < 2:
            raise ApiError(
                400, "too_short", "need at least 2 samples",
                {"min_needed": WINDOW_LEN, "have": int(arr.shape[0])},
            )

        rec = Recording(
            subject_id=device_id,
            class_label=body.class_name,
            rate_hz=body.rate_hz,
            samples=arr,
        )
        windows = make_windows(resample(rec))
        if not windows:
            post_len = len(resample(rec))
            raise ApiError(
                400, "too_short",
                f"recording yields no windows ({post_len} samples after resample)",
                {"min_needed": WINDOW_LEN, "have": post_len},
            )
        recording_id = store.add_recording(
            device_id, body.class_name, windows, body.idempotency_key
        )
        return {"recording_id": recording_id, "window_count": len(windows)}

    # --- personalization ---

    @app.post("/api/devices/{device_id}/personalize", status_code=202)
    def start_personalization(
        device_id: str, authorization: str | None = Header(default=None)
    ):
        require_device(device_id, authorization)
        counts = store.window_counts(device_id)
        need = app.state.config.examples_per_class
        if len(counts) < 2:
            raise ApiError(
                400, "insufficient_classes",
                f"need at least 2 classes, have {len(counts)}",
            )
        for class_name in sorted(counts):
            if counts[class_name] < need:
                raise ApiError(
                    400, "insufficient_examples",
                    f"class {class_name!r} has {counts[class_name]} of {need} windows",
                    {"class_name": class_name, "have": counts[class_name], "need": need},
                )
        try:
            job_id = store.create_job(device_id, need)
        except JobAlreadyActive as exc:
            raise ApiError(409, "job_already_active", str(exc))
        start_job_thread(store, app.state.config, job_id, device_id)
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = store.get_job(job_id)
        if job is None:
            raise ApiError(404, "not_found", f"unknown job {job_id}")
        return {
            "job_id": job["job_id"],
            "device_id": job["device_id"],
            "status": job["status"],
            "metrics": {
                "accuracy": job["accuracy"],
                "bundle_size": job["bundle_size"],
            },
            "bundle_version": job["bundle_version"],
            "failure_reason": job["failure_reason"],
        }

    # --- firmware and history ---

    @app.get("/api/devices/{device_id}/firmware")
    def poll_firmware(
        device_id: str,
        have_version: int = Query(ge=0),
        authorization: str | None = Header(default=None),
    ):
        require_device(device_id, authorization)
        latest = store.latest_bundle(device_id)
        if latest is None or latest["version"] <= have_version:
            return Response(status_code=204)
        return Response(
            content=latest["data"],
            media_type="application/octet-stream",
            headers={"X-Bundle-Version": str(latest["version"])},
        )

    @app.post("/api/devices/{device_id}/inferences", status_code=201)
    def record_inference(
        device_id: str,
        body: PostInference,
        authorization: str | None = Header(default=None),
    ):
        require_device(device_id, authorization)
        store.append_event(
            device_id, body.timestamp, body.class_name, body.confidence,
            body.model_version,
        )
        return {"recorded": True}

    @app.get("/api/devices/{device_id}/history")
    def get_history(
        device_id: str,
        authorization: str | None = Header(default=None),
        ts_from: float | None = Query(default=None, alias="from"),
        ts_to: float | None = Query(default=None, alias="to"),
    ):
        require_device(device_id, authorization)
        return {"events": store.get_history(device_id, ts_from, ts_to)}

    return app
