"""Multi-agent captioning orchestration.

A fixed three-question schedule runs against a visual-question-answering
client, a language-model client asks follow-up questions from the
transcript so far, and a final call summarizes all per-view transcripts
into one caption. Clients are pluggable: HTTP/JSON for real services,
deterministic mocks for tests and offline runs.

Prompt wording that is ours (follow-up and summary instructions) is
versioned via PROMPT_VERSION.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import rasterizer as ras
from .errors import CaptionError, ContractError, ExternalServiceError

PROMPT_VERSION = 1

HEAD_INSTRUCTION = ("Answer given questions. Don't answer any contents about "
                    "the pose or action of the object.")

HARD_CODED_QUESTIONS = (
    "Describe the image in detail",
    "What is the color of this object?",
    "What is the object wearing?",
)

DEFAULT_FOLLOWUP_COUNT = 3

FOLLOWUP_TEMPLATE = (
    "Here is a dialogue about an image of a textured cartoon character:\n"
    "{transcript}\n"
    "Ask one new follow-up question that uncovers more detail about the "
    "character's texture, colors, clothing or identity. Reply with the "
    "question only."
)

SUMMARY_TEMPLATE = (
    "Below are question-answer transcripts describing the same textured "
    "cartoon character seen from {view_count} viewpoints, in view order:\n"
    "{transcripts}\n"
    "Merge the consistent details, drop contradictions and unlikely ones, "
    "and reply with one concise caption describing the character's "
    "identity, colors and clothing."
)


class AgentClient(Protocol):
    """ask(image_ref, question, history) -> answer string."""

    def ask(self, image_ref: str, question: str,
            history: list[tuple[str, str]]) -> str: ...


@dataclass
class CaptionSession:
    """Per-view dialogue transcript."""

    view_id: int
    head_instruction: str
    qa: list[tuple[str, str]] = field(default_factory=list)


class HttpAgentClient:
    """Minimal HTTP/JSON client: POST {image, question, history} -> {answer}."""

    def __init__(self, endpoint: str, token_env: str = "TOONTEX_AGENT_TOKEN",
                 timeout: float = 30.0):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout = timeout

    def ask(self, image_ref: str, question: str,
            history: list[tuple[str, str]]) -> str:
        import os

        import requests

        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "image": image_ref,
            "question": question,
            "history": [{"question": q, "answer": a} for q, a in history],
        }
        try:
            resp = requests.post(self.endpoint, json=payload, headers=headers,
                                 timeout=self.timeout)
            resp.raise_for_status()
            answer = resp.json().get("answer", "")
        except Exception as exc:
            raise ExternalServiceError(f"agent request failed: {exc}") from exc
        if not answer:
            raise ExternalServiceError("agent returned an empty answer")
        return str(answer)


class ScriptedAgentClient:
    """Deterministic mock: answers drawn from a function or cycled list."""

    def __init__(self, answers):
        self._answers = answers
        self._calls = 0

    def ask(self, image_ref: str, question: str,
            history: list[tuple[str, str]]) -> str:
        if callable(self._answers):
            answer = self._answers(image_ref, question, history)
        else:
            answer = self._answers[self._calls % len(self._answers)]
        self._calls += 1
        return answer


class CaptureAgentClient:
    """Wraps a client, recording every outbound request payload."""

    def __init__(self, inner: AgentClient):
        self.inner = inner
        self.requests: list[dict] = []

    def ask(self, image_ref: str, question: str,
            history: list[tuple[str, str]]) -> str:
        self.requests.append({"image": image_ref, "question": question,
                              "history": list(history)})
        return self.inner.ask(image_ref, question, history)


def image_reference(rgb: np.ndarray) -> str:
    """Self-contained base64 PPM data URI for an image payload."""
    from . import imgio

    buf = io.BytesIO()
    data = np.floor(np.clip(rgb, 0, 1) * 255 + 0.5).astype(np.uint8)
    h, w = data.shape[:2]
    buf.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
    buf.write(data.tobytes())
    return "data:image/x-portable-pixmap;base64," + \
        base64.b64encode(buf.getvalue()).decode("ascii")


def _format_transcript(qa: list[tuple[str, str]]) -> str:
    return "\n".join(f"Q: {q}\nA: {a}" for q, a in qa)


def caption_view(image_ref: str, vqa: AgentClient, llm: AgentClient,
                 view_id: int = 0,
                 followups: int = DEFAULT_FOLLOWUP_COUNT) -> CaptionSession:
    """One per-view dialogue: the three fixed questions, then LLM-generated
    follow-ups. Every VQA request carries the head instruction. A client
    failure raises CaptionError with the partial transcript attached.
    """
    session = CaptionSession(view_id=view_id, head_instruction=HEAD_INSTRUCTION)

    def ask_vqa(question: str) -> str:
        framed = f"{HEAD_INSTRUCTION}\n{question}"
        try:
            answer = vqa.ask(image_ref, framed, list(session.qa))
        except CaptionError:
            raise
        except Exception as exc:
            raise CaptionError(f"VQA client failed on {question!r}: {exc}",
                               session=session) from exc
        if not answer:
            raise CaptionError(f"VQA returned an empty answer for {question!r}",
                               session=session)
        return answer

    for question in HARD_CODED_QUESTIONS:
        session.qa.append((question, ask_vqa(question)))

    for _ in range(followups):
        prompt = FOLLOWUP_TEMPLATE.format(transcript=_format_transcript(session.qa))
        try:
            question = llm.ask(image_ref, prompt, list(session.qa)).strip()
        except Exception as exc:
            raise CaptionError(f"LLM follow-up generation failed: {exc}",
                               session=session) from exc
        if not question:
            raise CaptionError("empty follow-up question", session=session)
        session.qa.append((question, ask_vqa(question)))
    return session


def summarize_views(sessions: list[CaptionSession], llm: AgentClient) -> str:
    """One summarization request containing all transcripts in view order."""
    if not sessions:
        raise ContractError("summarize_views needs at least one session")
    blocks = []
    for s in sessions:
        blocks.append(f"[view {s.view_id}]\n{_format_transcript(s.qa)}")
    prompt = SUMMARY_TEMPLATE.format(view_count=len(sessions),
                                     transcripts="\n\n".join(blocks))
    try:
        summary = llm.ask("", prompt, [])
    except Exception as exc:
        raise CaptionError(f"summarization failed: {exc}") from exc
    if not summary:
        raise CaptionError("summarizer returned an empty caption")
    return summary


def caption_model(mesh, texture, vqa: AgentClient, llm: AgentClient,
                  views: list[ras.Camera] | None = None,
                  followups: int = DEFAULT_FOLLOWUP_COUNT):
    """Render each view, caption it, then summarize across views.

    Returns (caption, sessions). Deterministic with mock clients.
    """
    views = views if views is not None else ras.view_set(size=128)
    sessions = []
    for view_id, camera in enumerate(views):
        rendered = ras.render_view(mesh, camera, texture)
        ref = image_reference(rendered.rgb)
        sessions.append(caption_view(ref, vqa, llm, view_id=view_id,
                                     followups=followups))
    return summarize_views(sessions, llm), sessions
