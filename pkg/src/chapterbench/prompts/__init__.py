"""Prompt template loading and placeholder substitution.

Templates live as plain-text files next to this module. They contain literal
JSON braces, so rendering replaces only explicitly named ``{placeholder}``
tokens instead of using ``str.format``.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")


class TemplateError(ValueError):
    """Raised when a template placeholder cannot be resolved."""


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Return the raw text of the bundled template ``name`` (no extension)."""
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render(template: str, values: dict[str, str], strict: bool = True) -> str:
    """Substitute ``{name}`` tokens for every key in ``values``.

    Tokens not present in ``values`` are left untouched (templates contain
    literal JSON like ``{"a": ...}`` whose braces must survive). In strict
    mode a key in ``values`` that never occurs in the template is an error:
    it means the caller and template disagree about the contract. Non-strict
    rendering suits user-supplied templates that use a subset of the
    available placeholders.
    """
    if strict:
        unused = {k for k in values if f"{{{k}}}" not in template}
        if unused:
            raise TemplateError(f"placeholders not found in template: {sorted(unused)}")

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key in values:
            return values[key]
        return match.group(0)

    return _PLACEHOLDER_RE.sub(sub, template)


def render_template(name: str, values: dict[str, str], strict: bool = True) -> str:
    """Load the bundled template ``name`` and render it with ``values``."""
    return render(load_template(name), values, strict=strict)
