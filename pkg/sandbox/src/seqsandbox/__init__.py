"""seqsandbox: restricted executor for untrusted Python solution code."""

from .runner import execute, handle_request_line, serve

__version__ = "0.1.0"
