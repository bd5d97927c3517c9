"""Language-model oracle: prompt assembly, scripted stub, HTTP client.

A query renders into a fixed two-phase chat: the model first summarises
the dialogue window, then picks the index of the speaker of the starred
line from a numbered list whose last entry is always [UNKNOWN]. Verdicts
carry either a probability distribution over the candidate indices
(softmaxed token log-probabilities) or a parsed integer fallback.
"""

from __future__ import annotations

import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Protocol

import requests

from .core import UNKNOWN_LABEL
from .errors import OracleError, ValidationError

logger = logging.getLogger(__name__)

SYSTEM_INSTRUCTION = (
    "You are a AI assistant to analyze the transcript of TV shows. "
    "Your job is to figure out who are [UNKNOWN]s in a dialogue in TV shows. "
    "Tell the truth and answer as precisely as possible."
)

SUMMARY_REQUEST = "Write a summary for the above conversation."

IDENTIFY_REQUEST = (
    "Based on the summary, your job is to identify the name of the speaker of "
    "`[UNKNOWN]' when the line starts and ends with `**'. You must use the "
    "context and the flow of the dialogue, using the speakers' names and what "
    "they speak. The list of speakers with their corresponding tokens are "
    "provided below. Choose [UNKNOWN] if his or her name is not in the "
    "dialogue, or when you are not sure."
)

ANSWER_CUE = "Only output one number after ANSWER:"

# Three worked examples shown before the actual query, teaching the
# answer format and the abstain rule.
WORKED_EXAMPLES = (
    (
        (
            ("Anna", "Did you take the car this morning?"),
            ("Ben", "I walked, the weather was perfect."),
            (None, "Then who took it?"),
            ("Ben", "Maybe your sister borrowed it again."),
            ("Anna", "She would have asked first."),
        ),
        2,
        ("Anna", "Ben"),
        1,
    ),
    (
        (
            ("Priya", "The samples are ready for review."),
            ("Omar", "Put them on my desk, please."),
            (None, "Careful, the tray is still hot."),
            ("Omar", "Thank you for the warning."),
            ("Priya", "I did tell you twice already."),
        ),
        2,
        ("Priya", "Omar"),
        1,
    ),
    (
        (
            ("Lucas", "The door was open when I arrived."),
            ("Mia", "Nothing seems to be missing."),
            (None, "Everyone step back from the window."),
            ("Mia", "Who is that outside?"),
            ("Lucas", "I have never seen him before."),
        ),
        2,
        ("Lucas", "Mia"),
        3,
    ),
)


@dataclass(frozen=True, slots=True)
class LlmQuery:
    """A dialogue window around one unknown segment.

    dialogue holds (speaker_or_None, sentence) pairs in dialogue order,
    spanning at most n_llm sentences on each side of the target;
    speaker_names lists the distinct named speakers of the window in
    order of first appearance. The list index after the last name is
    reserved for [UNKNOWN].
    """

    target_segment_id: str
    dialogue: tuple[tuple[Optional[str], str], ...]
    target_position: int
    speaker_names: tuple[str, ...]
    n_llm: int

    def __post_init__(self):
        if not (0 <= self.target_position < len(self.dialogue)):
            raise ValidationError(f"query {self.target_segment_id}: target position out of range")
        if len(self.dialogue) > 2 * self.n_llm + 1:
            raise ValidationError(
                f"query {self.target_segment_id}: window of {len(self.dialogue)} exceeds 2*n_llm+1"
            )
        if self.dialogue[self.target_position][0] is not None:
            raise ValidationError(f"query {self.target_segment_id}: target line must be unlabeled")
        named_in_window = []
        for speaker, _ in self.dialogue:
            if speaker is not None and speaker not in named_in_window:
                named_in_window.append(speaker)
        if tuple(named_in_window) != self.speaker_names:
            raise ValidationError(
                f"query {self.target_segment_id}: speaker list must match window first appearances"
            )

    @property
    def unknown_index(self) -> int:
        return len(self.speaker_names) + 1

    def name_for_index(self, index: int) -> Optional[str]:
        """Map a 1-based list index to a character name; None for [UNKNOWN]."""
        if 1 <= index <= len(self.speaker_names):
            return self.speaker_names[index - 1]
        if index == self.unknown_index:
            return None
        raise ValidationError(f"query {self.target_segment_id}: index {index} outside speaker list")


@dataclass(frozen=True, slots=True)
class LlmVerdict:
    """Oracle output: index distribution, or a parsed index in fallback mode."""

    raw_response: str = ""
    distribution: Optional[Mapping[int, float]] = None
    parsed_index: Optional[int] = None

    def __post_init__(self):
        if self.distribution is not None:
            if not self.distribution:
                raise ValidationError("verdict distribution must be non-empty")
            total = 0.0
            for idx, prob in self.distribution.items():
                if prob < 0:
                    raise ValidationError(f"verdict probability for index {idx} is negative")
                total += prob
            if abs(total - 1.0) > 1e-6:
                raise ValidationError(f"verdict distribution sums to {total}, expected 1 +- 1e-6")

    def best_index(self) -> Optional[int]:
        """Most probable index; ties break toward the smaller index."""
        if self.distribution is not None:
            return min(sorted(self.distribution), key=lambda i: (-self.distribution[i], i))
        return self.parsed_index


@dataclass(frozen=True, slots=True)
class LlmPrompt:
    """Rendered chat turns plus the metadata oracles need to answer."""

    target_segment_id: str
    turns: tuple[tuple[str, str], ...]
    n_indices: int


def render_dialogue_line(speaker: Optional[str], text: str, starred: bool = False) -> str:
    name = speaker if speaker is not None else UNKNOWN_LABEL
    line = f"{name} : {text}"
    return f"**{line}**" if starred else line


def render_speaker_list(names: tuple[str, ...]) -> str:
    parts = [f"{i}: {name}" for i, name in enumerate(names, start=1)]
    parts.append(f"{len(names) + 1}: {UNKNOWN_LABEL}")
    return ", ".join(parts)


def _render_example(example) -> str:
    dialogue, target_pos, names, answer = example
    lines = [
        render_dialogue_line(spk, text, starred=(i == target_pos))
        for i, (spk, text) in enumerate(dialogue)
    ]
    return "\n".join(lines) + "\n" + render_speaker_list(names) + f"\nANSWER: {answer}"


def build_llm_prompt(query: LlmQuery) -> LlmPrompt:
    """Deterministically render a query into ordered chat turns."""
    examples_block = "\n\n".join(_render_example(ex) for ex in WORKED_EXAMPLES)
    dialogue_block = "\n".join(
        render_dialogue_line(spk, text, starred=(i == query.target_position))
        for i, (spk, text) in enumerate(query.dialogue)
    )
    turns = (
        ("system", SYSTEM_INSTRUCTION),
        ("user", examples_block + "\n\n" + dialogue_block + "\n\n" + SUMMARY_REQUEST),
        ("user", IDENTIFY_REQUEST + "\n" + render_speaker_list(query.speaker_names) + "\n" + ANSWER_CUE),
    )
    return LlmPrompt(
        target_segment_id=query.target_segment_id,
        turns=turns,
        n_indices=query.unknown_index,
    )


class OracleContract(Protocol):
    """Anything able to turn a rendered prompt into a verdict."""

    def complete(self, prompt: LlmPrompt) -> LlmVerdict: ...


class ScriptedStubOracle:
    """Bit-deterministic oracle keyed by target segment id, for tests."""

    def __init__(self, table: Mapping[str, Mapping[int, float]]):
        self._table = {seg_id: dict(dist) for seg_id, dist in table.items()}

    def complete(self, prompt: LlmPrompt) -> LlmVerdict:
        dist = self._table.get(prompt.target_segment_id)
        if dist is None:
            raise ValidationError(f"scripted oracle has no entry for segment {prompt.target_segment_id!r}")
        best = min(sorted(dist), key=lambda i: (-dist[i], i))
        return LlmVerdict(raw_response=f"ANSWER: {best}", distribution=dist)


class FailingOracle:
    """Always raises a transport error; used to exercise the retry policy."""

    def complete(self, prompt: LlmPrompt) -> LlmVerdict:
        raise OracleError("scripted transport failure")


_ANSWER_RE = re.compile(r"ANSWER:\s*(\d+)")


def parse_verdict_payload(data: dict, n_indices: int) -> LlmVerdict:
    """Extract a verdict from a chat-completions style response body.

    Prefers per-token log-probabilities at the first integer token,
    softmaxed over the candidate indices; falls back to parsing an
    "ANSWER: <int>" completion.
    """
    try:
        choice = data["choices"][0]
    except (KeyError, IndexError, TypeError) as exc:
        raise OracleError(f"malformed oracle response: {data!r:.200}") from exc
    message = choice.get("message") or {}
    content = message.get("content") or ""
    logprob_block = choice.get("logprobs") or {}
    token_infos = logprob_block.get("content") or []
    for info in token_infos:
        token = str(info.get("token", "")).strip()
        if not token.isdigit():
            continue
        found: dict[int, float] = {}
        for top in info.get("top_logprobs") or []:
            tok = str(top.get("token", "")).strip()
            if tok.isdigit():
                idx = int(tok)
                if 1 <= idx <= n_indices and idx not in found:
                    found[idx] = float(top["logprob"])
        sampled = int(token)
        if 1 <= sampled <= n_indices and sampled not in found and "logprob" in info:
            found[sampled] = float(info["logprob"])
        if found:
            peak = max(found.values())
            exps = {i: math.exp(v - peak) for i, v in found.items()}
            total = sum(exps.values())
            dist = {i: v / total for i, v in exps.items()}
            return LlmVerdict(raw_response=content, distribution=dist)
        break
    match = _ANSWER_RE.search(content)
    parsed = int(match.group(1)) if match else None
    return LlmVerdict(raw_response=content, parsed_index=parsed)


class HttpChatOracle:
    """Client for a chat-completions style endpoint.

    Issues the two-phase conversation (summary, then identification),
    retries transport failures with exponential backoff, and bounds the
    number of concurrent in-flight requests. Safe for concurrent use.
    """

    def __init__(
        self,
        url: str,
        token: str | None = None,
        model: str | None = None,
        retries: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 60.0,
        max_inflight: int = 4,
    ):
        if not url:
            raise OracleError("oracle endpoint URL is empty")
        self.url = url
        self.token = token
        self.model = model
        self.retries = max(1, retries)
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._gate = threading.Semaphore(max(1, max_inflight))
        self._session = requests.Session()

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatOracle":
        url = os.environ.get("CASTLINES_ORACLE_URL", "")
        if not url:
            raise OracleError("CASTLINES_ORACLE_URL is not set")
        token = os.environ.get("CASTLINES_ORACLE_TOKEN") or None
        model = os.environ.get("CASTLINES_ORACLE_MODEL") or None
        backoff = os.environ.get("CASTLINES_ORACLE_BACKOFF")
        if backoff is not None:
            kwargs.setdefault("backoff_s", float(backoff))
        return cls(url, token=token, model=model, **kwargs)

    def _post(self, messages: list[dict], want_logprobs: bool) -> dict:
        payload: dict = {"messages": messages, "temperature": 0}
        if self.model:
            payload["model"] = self.model
        if want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = 20
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = self._session.post(
                        self.url, json=payload, headers=headers, timeout=self.timeout_s
                    )
                if resp.status_code >= 500:
                    last_error = OracleError(f"oracle returned HTTP {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise OracleError(f"oracle returned HTTP {resp.status_code}: {resp.text[:200]}")
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise OracleError(f"oracle transport failed after {self.retries} attempts: {last_error}")

    def complete(self, prompt: LlmPrompt) -> LlmVerdict:
        system, opener, identify = prompt.turns
        messages = [
            {"role": system[0], "content": system[1]},
            {"role": opener[0], "content": opener[1]},
        ]
        summary_data = self._post(messages, want_logprobs=False)
        try:
            summary = summary_data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise OracleError("malformed oracle summary response") from exc
        messages.append({"role": "assistant", "content": summary})
        messages.append({"role": identify[0], "content": identify[1]})
        answer_data = self._post(messages, want_logprobs=True)
        return parse_verdict_payload(answer_data, prompt.n_indices)
