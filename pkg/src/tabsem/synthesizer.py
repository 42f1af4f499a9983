"""Prompt the model with an encoded table and return its raw JSON text.

The synthesizer performs no decoding and no validation; it hands back the
model content verbatim except for one documented transformation: a
surrounding ``` / ```json code fence is stripped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .context_optimizer import EncodedTable
from .llm_gateway import BackendConfig, ChatRequest, complete

DEFAULT_SYSTEM = (
    "You convert HTML tables into semantic JSON. "
    "Reply with a single JSON document and nothing else."
)

_FENCE = re.compile(r"\A\s*```[A-Za-z0-9_-]*[ \t]*\n(.*?)\n?[ \t]*```\s*\Z", re.DOTALL)


class EmptyCompletion(RuntimeError):
    """The model returned blank content."""


def strip_code_fence(text: str) -> str:
    """Remove one surrounding ``` or ```json fence; anything else untouched."""
    match = _FENCE.match(text)
    return match.group(1) if match else text


def load_prompt_asset(name: str) -> str:
    return resources.files("tabsem.prompts").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptTemplate:
    """System message plus the user text placed around the HTML table.

    If user_prefix contains a ``{table}`` placeholder the html is substituted
    there; otherwise the html is appended.
    """

    system: str
    user_prefix: str
    name: str = "default"

    def render_user(self, table_html: str) -> str:
        if "{table}" in self.user_prefix:
            return self.user_prefix.replace("{table}", table_html)
        return self.user_prefix + table_html


def default_template() -> PromptTemplate:
    return PromptTemplate(system=DEFAULT_SYSTEM, user_prefix=load_prompt_asset("synthesize.txt"))


def load_template(path: str | Path, system: str = DEFAULT_SYSTEM) -> PromptTemplate:
    path = Path(path)
    return PromptTemplate(system=system, user_prefix=path.read_text(encoding="utf-8"), name=path.stem)


def synthesize(
    enc: EncodedTable,
    tmpl: PromptTemplate,
    cfg: BackendConfig,
    model: str = "default",
    temperature: float = 0.0,
    max_output_tokens: int = 4096,
) -> str:
    """Ask the model to turn the encoded table into JSON (still encoded space)."""
    request = ChatRequest(
        model=model,
        messages=[("system", tmpl.system), ("user", tmpl.render_user(enc.html))],
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )
    content = strip_code_fence(complete(cfg, request).content)
    if not content.strip():
        raise EmptyCompletion(f"model returned blank content for table {enc.id!r}")
    return content
