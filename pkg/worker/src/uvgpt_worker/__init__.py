"""Reference worker for the uvgpt orchestrator wire protocol."""

__version__ = "0.1.0"
