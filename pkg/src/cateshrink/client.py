"""Synchronous client for the estimation service.

By default the client mounts the service in-process (no socket, no running
server needed); pass a base URL to talk to a remote instance instead. Either
way every request flows through the same HTTP interface and schemas.
"""

from __future__ import annotations

import httpx

from .errors import (
    CateShrinkError,
    NumericalError,
    SimulationFailureError,
    ValidationError,
)

_CATEGORY_ERRORS = {
    "validation": ValidationError,
    "numerical": NumericalError,
    "simulation": SimulationFailureError,
}


class ServiceClient:
    def __init__(self, server: str | None = None, timeout: float = 3600.0):
        if server:
            self._client = httpx.Client(base_url=server, timeout=timeout)
        else:
            from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app())

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def get(self, path: str) -> dict:
        return self._handle(self._client.get(path))

    def post(self, path: str, payload: dict) -> dict:
        return self._handle(self._client.post(path, json=payload))

    @staticmethod
    def _handle(response: httpx.Response) -> dict:
        if response.status_code == 200:
            return response.json()
        try:
            body = response.json()
        except ValueError:
            raise CateShrinkError(
                f"service returned {response.status_code}: {response.text[:200]}"
            ) from None
        if isinstance(body, dict) and "error" in body:
            category = body["error"].get("category", "error")
            message = body["error"].get("message", "")
            raise _CATEGORY_ERRORS.get(category, CateShrinkError)(message)
        # FastAPI request-model validation failures arrive as {"detail": ...}.
        raise ValidationError(f"invalid request: {body.get('detail', body)}")
