"""Uniform LLM completion interface with HTTP, scripted, and replay backends.

Every pipeline interaction goes through `complete`, so swapping the remote
endpoint for a scripted queue or a recorded transcript changes nothing else.
Recording wraps any backend and writes a JSON Lines transcript that the replay
backend later matches request-by-request, failing loudly on the first
divergence.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union


class BackendError(Exception):
    """Remote backend failed after retries."""

    def __init__(self, message: str, status: Optional[int] = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class ScriptExhaustedError(RuntimeError):
    """A scripted backend ran out of queued responses: a test-harness bug."""


class ReplayDivergenceError(Exception):
    """Live request differs from the recorded one."""

    def __init__(self, field_path: str, detail: str = ""):
        super().__init__(f"replay divergence at {field_path}" + (f": {detail}" if detail else ""))
        self.field_path = field_path


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Dict[str, str]

    def to_dict(self) -> Dict[str, object]:
        return {"name": self.name, "arguments": dict(self.arguments)}


@dataclass
class ChatMessage:
    role: str  # system | user | assistant | tool
    content: str = ""
    tool_call: Optional[ToolCall] = None

    def to_dict(self) -> Dict[str, object]:
        d: Dict[str, object] = {"role": self.role, "content": self.content}
        if self.tool_call is not None:
            d["tool_call"] = self.tool_call.to_dict()
        return d


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str = "string"
    required: bool = True


@dataclass
class ToolSpec:
    name: str
    description: str = ""
    parameters: List[ToolParam] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": [
                {"name": p.name, "type": p.type, "required": p.required}
                for p in self.parameters
            ],
        }


@dataclass
class CompletionRequest:
    messages: List[ChatMessage]
    tools: List[ToolSpec] = field(default_factory=list)
    temperature: float = 0.0
    max_attempts: int = 3

    def to_dict(self) -> Dict[str, object]:
        return {
            "messages": [m.to_dict() for m in self.messages],
            "tools": [t.to_dict() for t in self.tools],
            "temperature": self.temperature,
        }


@dataclass
class CompletionResponse:
    content: str = ""
    tool_calls: List[ToolCall] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "content": self.content,
            "tool_calls": [c.to_dict() for c in self.tool_calls],
        }

    @staticmethod
    def from_dict(d: Dict[str, object]) -> "CompletionResponse":
        return CompletionResponse(
            content=str(d.get("content", "")),
            tool_calls=[
                ToolCall(str(c["name"]), {str(k): str(v)
                                          for k, v in dict(c.get("arguments", {})).items()})
                for c in d.get("tool_calls", [])
            ],
        )


_FENCED_TOOL = re.compile(r"```json\s*(\{.*?\})\s*```", re.DOTALL)


def extract_tool_calls(response: CompletionResponse) -> List[ToolCall]:
    """Native tool calls when present; otherwise a fenced-JSON text protocol:
    ```json {"tool": "<name>", "arguments": {...}} ```"""
    if response.tool_calls:
        return list(response.tool_calls)
    calls: List[ToolCall] = []
    for blob in _FENCED_TOOL.findall(response.content):
        try:
            data = json.loads(blob)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict) and "tool" in data:
            args = data.get("arguments", {})
            if isinstance(args, dict):
                calls.append(ToolCall(str(data["tool"]),
                                      {str(k): str(v) for k, v in args.items()}))
    return calls


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class Backend:
    backend_id = "base"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


ScriptItem = Union[str, CompletionResponse, Dict[str, object]]


class ScriptedBackend(Backend):
    """Pops canned responses in order; running dry raises ScriptExhaustedError."""

    backend_id = "scripted"

    def __init__(self, responses: Sequence[ScriptItem]):
        self._queue: List[CompletionResponse] = [self._coerce(r) for r in responses]
        self.calls = 0
        self.requests: List[CompletionRequest] = []

    @staticmethod
    def _coerce(item: ScriptItem) -> CompletionResponse:
        if isinstance(item, CompletionResponse):
            return item
        if isinstance(item, str):
            return CompletionResponse(content=item)
        return CompletionResponse.from_dict(item)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if not self._queue:
            raise ScriptExhaustedError(
                f"scripted backend exhausted after {self.calls} calls")
        self.calls += 1
        self.requests.append(request)
        return self._queue.pop(0)


def _first_divergence(expected: object, actual: object, path: str) -> Optional[str]:
    if type(expected) is not type(actual):
        return path
    if isinstance(expected, dict):
        for key in sorted(set(expected) | set(actual)):
            if key not in expected or key not in actual:
                return f"{path}.{key}" if path else str(key)
            sub = _first_divergence(expected[key], actual[key],
                                    f"{path}.{key}" if path else str(key))
            if sub:
                return sub
        return None
    if isinstance(expected, list):
        if len(expected) != len(actual):
            return f"{path}.length"
        for i, (e, a) in enumerate(zip(expected, actual)):
            sub = _first_divergence(e, a, f"{path}[{i}]")
            if sub:
                return sub
        return None
    if expected != actual:
        return path
    return None


class ReplayBackend(Backend):
    """Serves a recorded transcript; any request drift is an error."""

    backend_id = "replay"

    def __init__(self, transcript: "Transcript"):
        self.transcript = transcript
        self._cursor = 0

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if self._cursor >= len(self.transcript.entries):
            raise ReplayDivergenceError("entries.length",
                                        "live run issued more requests than recorded")
        recorded_request, recorded_response = self.transcript.entries[self._cursor]
        live = json.loads(json.dumps(request.to_dict(), sort_keys=True))
        expected = json.loads(json.dumps(recorded_request, sort_keys=True))
        diverged = _first_divergence(expected, live, "")
        if diverged:
            raise ReplayDivergenceError(diverged or "request",
                                        f"at transcript entry {self._cursor}")
        self._cursor += 1
        return CompletionResponse.from_dict(recorded_response)


@dataclass
class Transcript:
    entries: List[Tuple[Dict[str, object], Dict[str, object]]] = field(default_factory=list)
    metadata: Dict[str, object] = field(default_factory=dict)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"metadata": self.metadata}, sort_keys=True) + "\n")
            for request, response in self.entries:
                fh.write(json.dumps({"request": request, "response": response},
                                    sort_keys=True) + "\n")

    @staticmethod
    def load(path: str) -> "Transcript":
        entries: List[Tuple[Dict[str, object], Dict[str, object]]] = []
        metadata: Dict[str, object] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                if i == 0 and "metadata" in data:
                    metadata = data["metadata"]
                    continue
                entries.append((data["request"], data["response"]))
        return Transcript(entries=entries, metadata=metadata)


class RecordingBackend(Backend):
    """Response-transparent wrapper that accumulates a Transcript."""

    backend_id = "recording"

    def __init__(self, inner: Backend, config: Optional[Dict[str, object]] = None):
        self.inner = inner
        config_blob = json.dumps(config or {}, sort_keys=True).encode("utf-8")
        self.transcript = Transcript(metadata={
            "backend": inner.backend_id,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "config_hash": hashlib.sha256(config_blob).hexdigest()[:16],
        })

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        self.transcript.entries.append((
            json.loads(json.dumps(request.to_dict(), sort_keys=True)),
            json.loads(json.dumps(response.to_dict(), sort_keys=True)),
        ))
        return response

    def save(self, path: str) -> None:
        self.transcript.save(path)

    def close(self) -> None:
        self.inner.close()


class HttpBackend(Backend):
    """JSON chat-completion wire protocol over HTTP POST."""

    backend_id = "http"

    def __init__(self, endpoint: str, model: str, api_key_env: str = "",
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._client = None

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, request: CompletionRequest) -> Dict[str, object]:
        messages = []
        for m in request.messages:
            entry: Dict[str, object] = {"role": m.role, "content": m.content}
            if m.tool_call is not None:
                if m.role == "assistant":
                    entry["tool_calls"] = [{
                        "type": "function",
                        "function": {"name": m.tool_call.name,
                                     "arguments": json.dumps(m.tool_call.arguments)},
                    }]
                else:
                    entry["name"] = m.tool_call.name
            messages.append(entry)
        payload: Dict[str, object] = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
        }
        if request.tools:
            payload["tools"] = [{
                "type": "function",
                "function": {
                    "name": t.name,
                    "description": t.description,
                    "parameters": {
                        "type": "object",
                        "properties": {
                            p.name: {"type": p.type} for p in t.parameters
                        },
                        "required": [p.name for p in t.parameters if p.required],
                    },
                },
            } for t in request.tools]
        return payload

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        import httpx

        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout)
        attempts = max(1, request.max_attempts)
        delay = 1.0
        last_error: Optional[BackendError] = None
        for attempt in range(attempts):
            try:
                response = self._client.post(self.endpoint, json=self._payload(request),
                                             headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = BackendError(f"transport failure: {exc}")
            else:
                if response.status_code == 200:
                    return self._parse(response.json())
                last_error = BackendError(
                    f"backend returned HTTP {response.status_code}",
                    status=response.status_code, body=response.text[:2000])
            if attempt < attempts - 1:
                time.sleep(delay)
                delay *= 2
        raise last_error or BackendError("backend failed")

    @staticmethod
    def _parse(data: Dict[str, object]) -> CompletionResponse:
        try:
            message = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}",
                               body=json.dumps(data)[:2000]) from exc
        tool_calls = []
        for call in message.get("tool_calls") or []:
            fn = call.get("function", {})
            try:
                args = json.loads(fn.get("arguments") or "{}")
            except json.JSONDecodeError:
                args = {}
            if not isinstance(args, dict):
                args = {}
            tool_calls.append(ToolCall(str(fn.get("name", "")),
                                       {str(k): str(v) for k, v in args.items()}))
        return CompletionResponse(content=str(message.get("content") or ""),
                                  tool_calls=tool_calls)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


def complete(backend: Backend, request: CompletionRequest) -> CompletionResponse:
    return backend.complete(request)


def record(backend: Backend, config: Optional[Dict[str, object]] = None) -> RecordingBackend:
    return RecordingBackend(backend, config)
