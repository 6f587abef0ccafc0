"""Event-triggered proactive network association to MEC servers."""

__version__ = "0.1.0"
