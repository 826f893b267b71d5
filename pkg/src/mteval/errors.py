"""Shared error base for the toolkit.

Every error that a CLI run should report as a domain failure (exit code 1,
JSON payload on stderr) derives from DomainError.  Concrete error classes
live next to the operations that raise them.
"""

from __future__ import annotations


class DomainError(Exception):
    """A well-formed request that cannot be satisfied by the data."""

    def payload(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}
