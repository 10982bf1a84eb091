"""Turning a model reply into exactly one action."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

FINAL_MARKER = "#### FINAL SOLUTION ####"

TOOL_CALL = "tool_call"
EVALUATE = "evaluate"
FINAL = "final"
MALFORMED = "malformed"

_TOOL_RE = re.compile(r"<tool_call>(.*?)</tool_call>", re.DOTALL)
_FENCE_RE = re.compile(r"```[ \t]*(?:python|py)?[ \t]*\n(.*?)```", re.DOTALL | re.IGNORECASE)


@dataclass(frozen=True)
class TurnAction:
    kind: str
    source: str | None = None
    tool: str | None = None
    args: dict = field(default_factory=dict)
    error: str = ""

    def summary(self) -> dict:
        out = {"kind": self.kind}
        if self.source is not None:
            out["source"] = self.source
        if self.tool is not None:
            out["tool"], out["args"] = self.tool, self.args
        if self.error:
            out["error"] = self.error
        return out


def _code_from(text: str) -> str:
    """Code inside the last fenced block of ``text``, or the text itself when unfenced."""
    blocks = _FENCE_RE.findall(text)
    code = blocks[-1] if blocks else text
    return code.strip("\n").rstrip() + "\n" if code.strip() else ""


def parse_action(model_output: str) -> TurnAction:
    """Classify a reply: final marker, then tool-call block, then fenced code, else malformed."""
    text = model_output or ""
    if FINAL_MARKER in text:
        code = _code_from(text.split(FINAL_MARKER, 1)[1])
        if not code:
            return TurnAction(MALFORMED, error="the final-answer marker must be followed by the complete code")
        return TurnAction(FINAL, source=code)
    m = _TOOL_RE.search(text)
    if m:
        try:
            call = json.loads(m.group(1).strip())
        except json.JSONDecodeError as exc:
            return TurnAction(MALFORMED, error=f"tool_call block is not valid JSON ({exc.msg})")
        if not isinstance(call, dict) or not isinstance(call.get("name"), str):
            return TurnAction(MALFORMED, error='tool_call JSON needs a string "name" field')
        args = call.get("arguments", {})
        if not isinstance(args, dict):
            return TurnAction(MALFORMED, error='tool_call "arguments" must be a JSON object')
        return TurnAction(TOOL_CALL, tool=call["name"], args=args)
    blocks = _FENCE_RE.findall(text)
    if blocks and blocks[-1].strip():
        return TurnAction(EVALUATE, source=_code_from(text))
    return TurnAction(MALFORMED, error="no fenced code block, tool_call block or final-answer marker found")
