"""Client for OpenAI-compatible chat-completions endpoints with JSON-schema output."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from ..errors import ConfigError, RecommendationError, TransportError
from ..sampling import ClientProfile
from .catalog import ProductCatalog
from .prompts import build_prompt, normalize_condition, recommendation_schema
from .recommendation import Recommendation, parse_recommendation

log = logging.getLogger(__name__)

RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass
class ChatEndpoint:
    endpoint: str
    model: str
    api_key_env: str | None = None
    timeout_s: float = 120.0
    max_retries: int = 3
    backoff_s: float = 1.0
    extra_body: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    def headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers


def tool_use_from_response(payload: dict) -> bool:
    """True when response metadata shows a tool call or web citation."""
    try:
        message = payload["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        return False
    if message.get("tool_calls"):
        return True
    for note in message.get("annotations") or []:
        if isinstance(note, dict) and note.get("type") == "url_citation":
            return True
    return False


def message_content(payload: dict) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise TransportError("response has no choices[0].message.content") from None
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if not isinstance(content, str):
        raise TransportError("message content is not text")
    return content


class ChatClient:
    """Posts chat requests and retries transport failures and retryable HTTP statuses."""

    def __init__(self, spec: ChatEndpoint, client: httpx.Client | None = None, sleep=time.sleep):
        self.spec = spec
        self.client = client or httpx.Client(timeout=spec.timeout_s)
        self.sleep = sleep

    def post(self, body: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.spec.max_retries + 1):
            if attempt:
                self.sleep(self.spec.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.spec.endpoint, json=body, headers=self.spec.headers())
            except httpx.HTTPError as exc:
                last = TransportError(f"{type(exc).__name__}: {exc}")
                continue
            if resp.status_code in RETRY_STATUS:
                last = TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError:
                last = TransportError("response body is not JSON")
        raise last or TransportError("request failed")

    def chat(self, prompt: str, schema: dict | None = None, schema_name: str = "response") -> dict:
        body = {"model": self.spec.model, "messages": [{"role": "user", "content": prompt}]}
        if schema is not None:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": {"name": schema_name, "strict": True, "schema": schema},
            }
        body.update(self.spec.extra_body)
        return self.post(body)


class HttpAdvisor:
    def __init__(self, spec: ChatEndpoint, catalog: ProductCatalog, client: httpx.Client | None = None, sleep=time.sleep, transcripts=None):
        self.chat = ChatClient(spec, client, sleep)
        self.catalog = catalog
        self.schema = recommendation_schema(catalog)
        self.transcripts = transcripts

    def __call__(self, profile: ClientProfile, condition: str) -> Recommendation:
        condition = normalize_condition(condition)
        prompt = build_prompt(profile, self.catalog, condition)
        last: Exception | None = None
        for attempt in range(self.chat.spec.max_retries + 1):
            payload = self.chat.chat(prompt, self.schema, "portfolio_recommendation")
            if self.transcripts is not None:
                self.transcripts(profile.profile_id, condition, attempt, {"prompt": prompt, "response": payload})
            content = message_content(payload)
            try:
                return parse_recommendation(
                    content,
                    self.catalog,
                    profile_id=profile.profile_id,
                    condition=condition,
                    tool_use_observed=tool_use_from_response(payload),
                )
            except RecommendationError as exc:
                log.warning("profile %s: invalid response (%s), attempt %d", profile.profile_id, exc, attempt + 1)
                last = exc
        raise last


def write_transcript_factory(root):
    """Archive callable storing each exchange under ``root/<condition>/<id>_<attempt>.json``."""
    root = Path(root)

    def write(profile_id, condition, attempt, record):
        path = root / condition / f"{profile_id:05d}_{attempt}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(record, indent=1, sort_keys=True))

    return write
