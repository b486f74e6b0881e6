"""Provider-agnostic LLM access and multi-agent chat sessions.

Two chat configurations: a single shared window where every agent sees the
whole conversation, and separated windows where each agent only ever sees its
own exchange with the learner. All engine tests run against the deterministic
ScriptedProvider; real HTTP providers are configured, never bundled.
"""

from __future__ import annotations

import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_CONTEXT_TOKEN_BUDGET = 6000


class GatewayError(Exception):
    pass


class Timeout(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class ProviderRejected(GatewayError):
    pass


class Unconfigured(GatewayError):
    pass


class ChatUnknown(KeyError):
    pass


class AgentUnknown(KeyError):
    pass


class DuplicateAgentId(ValueError):
    pass


class EmptyAgentList(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    agent_id: str
    display_name: str
    pre_prompt: str
    avatar_ref: str = ""
    model_ref: str = "scripted"
    temperature: float = 0.2
    max_output_tokens: int = 512

    def __post_init__(self):
        if not self.pre_prompt:
            raise ValueError("agent pre_prompt must be non-empty")


@dataclass(frozen=True)
class ProviderRequest:
    model_ref: str
    messages: tuple[tuple[str, str], ...]  # (role, text); roles: system|user|assistant
    temperature: float = 0.2
    max_output_tokens: int = 512

    def __post_init__(self):
        system_turns = [i for i, (role, _) in enumerate(self.messages) if role == "system"]
        if system_turns != [0]:
            raise ValueError("request messages must begin with exactly one system turn")


@dataclass(frozen=True)
class ProviderReply:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0


class ScriptedProvider:
    """Deterministic FIFO-scripted provider with programmable failures."""

    def __init__(self, replies: Iterable[str] = ()):
        self._replies: deque[str] = deque(replies)
        self._failures: deque[GatewayError] = deque()
        self.latency_s = 0.0
        self.requests: list[ProviderRequest] = []
        self._lock = threading.Lock()

    def script(self, *replies: str) -> "ScriptedProvider":
        self._replies.extend(replies)
        return self

    def fail_next(self, error: GatewayError | None = None, times: int = 1) -> None:
        for _ in range(times):
            self._failures.append(error or Timeout("scripted failure"))

    def complete(self, request: ProviderRequest, timeout_s: float) -> ProviderReply:
        with self._lock:
            self.requests.append(request)
            if self.latency_s > timeout_s:
                raise Timeout(f"scripted latency {self.latency_s}s exceeds {timeout_s}s")
            if self._failures:
                raise self._failures.popleft()
            if not self._replies:
                raise ProviderRejected("script exhausted")
            text = self._replies.popleft()
        if self.latency_s:
            time.sleep(self.latency_s)
        return ProviderReply(text=text, completion_tokens=len(text.split()))


class HttpProvider:
    """Minimal OpenAI-style chat-completions client. Credentials come from an
    environment variable named in the provider registry, never from config."""

    def __init__(self, endpoint: str, model: str, credential_env: str | None = None):
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env

    def complete(self, request: ProviderRequest, timeout_s: float) -> ProviderReply:
        import os

        import httpx

        headers = {}
        if self.credential_env:
            token = os.environ.get(self.credential_env, "")
            if not token:
                raise Unconfigured(f"credential env var {self.credential_env} is empty")
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.model,
            "messages": [{"role": role, "content": text} for role, text in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            resp = httpx.post(self.endpoint, json=body, headers=headers, timeout=timeout_s)
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ProviderRejected(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(resp.text)
        if resp.status_code >= 400:
            raise ProviderRejected(f"{resp.status_code}: {resp.text[:200]}")
        doc = resp.json()
        choice = doc["choices"][0]
        usage = doc.get("usage", {})
        return ProviderReply(
            text=choice["message"]["content"],
            finish_reason=choice.get("finish_reason", "stop"),
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
        )


class Gateway:
    """Routes completion requests to registered providers with a per-provider
    concurrency limit, a timeout, and one retry on transient failures."""

    def __init__(self, timeout_s: float = DEFAULT_TIMEOUT_S, max_concurrent: int = 4):
        self.timeout_s = timeout_s
        self._providers: dict[str, object] = {}
        self._limits: dict[str, threading.Semaphore] = {}
        self._default_concurrency = max_concurrent

    def register(self, model_ref: str, provider, max_concurrent: int | None = None) -> None:
        self._providers[model_ref] = provider
        self._limits[model_ref] = threading.Semaphore(max_concurrent or self._default_concurrency)

    def provider(self, model_ref: str):
        provider = self._providers.get(model_ref)
        if provider is None:
            raise Unconfigured(f"no provider registered for model_ref {model_ref!r}")
        return provider

    def complete(self, request: ProviderRequest) -> ProviderReply:
        provider = self.provider(request.model_ref)
        limit = self._limits[request.model_ref]
        with limit:
            try:
                return provider.complete(request, self.timeout_s)
            except (Timeout, RateLimited):
                return provider.complete(request, self.timeout_s)


# ---------------------------------------------------------------------------
# Multi-agent chat


@dataclass(frozen=True)
class ChatTurn:
    turn_id: str
    author: str  # "learner" or an agent_id
    text: str
    at_seq: int  # per-chat commit counter
    addressee: str = ""  # set on learner turns
    failed: bool = False

    def to_doc(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "author": self.author,
            "text": self.text,
            "at_seq": self.at_seq,
            "addressee": self.addressee,
            "failed": self.failed,
        }


TraceSink = Callable[[str, str, dict], None]  # (action, target, payload)


class ChatSession:
    def __init__(self, chat_id: str, session_id: str, mode: str, agents: Sequence[AgentConfig]):
        if mode not in ("shared", "separate"):
            raise ValueError(f"unsupported chat mode {mode!r}")
        if not agents:
            raise EmptyAgentList("a chat needs at least one agent")
        ids = [a.agent_id for a in agents]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise DuplicateAgentId(f"duplicate agent ids: {sorted(dupes)}")
        self.chat_id = chat_id
        self.session_id = session_id
        self.mode = mode
        self.agents: dict[str, AgentConfig] = {a.agent_id: a for a in agents}
        self.transcripts: dict[str, list[ChatTurn]] = (
            {"shared": []} if mode == "shared" else {a.agent_id: [] for a in agents}
        )
        self._seq = 0
        self.lock = threading.Lock()

    def transcript_key(self, agent_id: str) -> str:
        return "shared" if self.mode == "shared" else agent_id

    def next_seq(self) -> int:
        seq = self._seq
        self._seq += 1
        return seq

    def context_for(self, agent_id: str, token_budget: int) -> tuple[tuple[str, str], ...]:
        """[system pre_prompt] + visible transcript in commit order. The
        addressee's own turns map to the assistant role; everything else is
        user-role (other agents prefixed with their display name)."""
        agent = self.agents[agent_id]
        turns = self.transcripts[self.transcript_key(agent_id)]
        rendered: list[tuple[str, str]] = []
        for turn in turns:
            if turn.author == agent_id:
                rendered.append(("assistant", turn.text))
            elif turn.author == "learner":
                rendered.append(("user", turn.text))
            else:
                other = self.agents.get(turn.author)
                name = other.display_name if other else turn.author
                rendered.append(("user", f"[{name}] {turn.text}"))
        spent = sum(len(text.split()) for _, text in rendered)
        while rendered and spent > token_budget:
            dropped = rendered.pop(0)
            spent -= len(dropped[1].split())
        return (("system", agent.pre_prompt),) + tuple(rendered)


class ChatService:
    def __init__(self, gateway: Gateway, trace_sink_factory: Callable[[str], TraceSink] | None = None,
                 context_token_budget: int = DEFAULT_CONTEXT_TOKEN_BUDGET):
        self.gateway = gateway
        self._chats: dict[str, ChatSession] = {}
        self._lock = threading.Lock()
        self._trace_sink_factory = trace_sink_factory
        self.context_token_budget = context_token_budget

    def configure_chat(self, session_id: str, mode: str, agents: Sequence[AgentConfig], chat_id: str | None = None) -> ChatSession:
        chat_id = chat_id or f"chat-{uuid.uuid4().hex[:12]}"
        chat = ChatSession(chat_id, session_id, mode, agents)
        with self._lock:
            if chat_id in self._chats:
                raise ValueError(f"chat {chat_id} already exists")
            self._chats[chat_id] = chat
        return chat

    def chat(self, chat_id: str) -> ChatSession:
        chat = self._chats.get(chat_id)
        if chat is None:
            raise ChatUnknown(chat_id)
        return chat

    def send_turn(self, chat_id: str, text: str, addressee: str) -> tuple[ChatTurn, ChatTurn]:
        chat = self.chat(chat_id)
        if addressee not in chat.agents:
            raise AgentUnknown(addressee)
        agent = chat.agents[addressee]
        sink = self._trace_sink_factory(chat.session_id) if self._trace_sink_factory else None
        with chat.lock:
            key = chat.transcript_key(addressee)
            learner_turn = ChatTurn(
                turn_id=f"{chat_id}-t{chat._seq}",
                author="learner",
                text=text,
                at_seq=chat.next_seq(),
                addressee=addressee,
            )
            chat.transcripts[key].append(learner_turn)
            if sink:
                sink("CHAT_SEND", chat_id, _turn_payload(chat, learner_turn))

            context = chat.context_for(addressee, self.context_token_budget)
            request = ProviderRequest(
                model_ref=agent.model_ref,
                messages=context,
                temperature=agent.temperature,
                max_output_tokens=agent.max_output_tokens,
            )
            try:
                reply = self.gateway.complete(request)
                reply_turn = ChatTurn(
                    turn_id=f"{chat_id}-t{chat._seq}",
                    author=addressee,
                    text=reply.text,
                    at_seq=chat.next_seq(),
                )
            except GatewayError as exc:
                reply_turn = ChatTurn(
                    turn_id=f"{chat_id}-t{chat._seq}",
                    author=addressee,
                    text=f"[reply failed: {type(exc).__name__}]",
                    at_seq=chat.next_seq(),
                    failed=True,
                )
            chat.transcripts[key].append(reply_turn)
            if sink:
                sink("CHAT_RECEIVE", chat_id, _turn_payload(chat, reply_turn))
        return learner_turn, reply_turn

    @staticmethod
    def rebuild_transcripts(events) -> dict[str, dict[str, list[dict]]]:
        """Project chat transcripts back out of CHAT_SEND/CHAT_RECEIVE events."""
        chats: dict[str, dict[str, list[dict]]] = {}
        for event in events:
            if event.action not in ("CHAT_SEND", "CHAT_RECEIVE"):
                continue
            p = event.payload
            key = p["transcript"]
            chats.setdefault(p["chat_id"], {}).setdefault(key, []).append(
                {
                    "turn_id": p["turn_id"],
                    "author": p["author"],
                    "text": p["text"],
                    "at_seq": p["at_seq"],
                    "addressee": p.get("addressee", ""),
                    "failed": p.get("failed", False),
                }
            )
        for transcripts in chats.values():
            for turns in transcripts.values():
                turns.sort(key=lambda t: t["at_seq"])
        return chats


def _turn_payload(chat: ChatSession, turn: ChatTurn) -> dict:
    payload = turn.to_doc()
    payload["chat_id"] = chat.chat_id
    payload["mode"] = chat.mode
    payload["transcript"] = chat.transcript_key(turn.addressee or turn.author)
    return payload
