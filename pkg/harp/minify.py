from __future__ import annotations

import logging
from pathlib import Path, PurePosixPath

import minify_html


_LOGGER = logging.getLogger(__name__)
_MINIFY_SUFFIXES = {".html", ".htm"}


def should_minify_path(path: Path | PurePosixPath) -> bool:
    return path.suffix.lower() in _MINIFY_SUFFIXES


def minify_html_text(html: str) -> str:
    try:
        return minify_html.minify(html, minify_css=True, minify_js=False)
    except Exception:
        _LOGGER.exception("Failed to minify HTML; leaving output as-is.")
        return html


def write_text_output(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if should_minify_path(path):
        content = minify_html_text(content)
    path.write_text(content, encoding="utf-8")
    _LOGGER.info("Wrote %s", path.as_posix())
