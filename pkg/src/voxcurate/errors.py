"""Exception types shared across the toolkit.

CLI exit codes map onto these: FormatError and ValidationError exit 1,
I/O problems (OSError) exit 2, PipelineStageError exits 3.
"""

from __future__ import annotations


class FormatError(ValueError):
    """A file or payload does not match its expected format."""


class ValidationError(ValueError):
    """A value is outside its documented domain."""


class UnsupportedFormatError(FormatError):
    """An audio container or codec we cannot decode."""


class DecodeError(FormatError):
    """A file with a recognised container that fails to decode (e.g. truncated)."""


class PipelineStageError(RuntimeError):
    """A curation pipeline stage aborted; carries the stage name and offending ids."""

    def __init__(self, stage: str, message: str, ids: list[str] | None = None):
        self.stage = stage
        self.ids = list(ids or [])
        detail = f"stage '{stage}': {message}"
        if self.ids:
            shown = ", ".join(self.ids[:20])
            more = "" if len(self.ids) <= 20 else f" (+{len(self.ids) - 20} more)"
            detail += f" [{shown}{more}]"
        super().__init__(detail)
