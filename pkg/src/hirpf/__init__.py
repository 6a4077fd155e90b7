"""Identity-routed low-rank adapters on a small decoder, with dialogue generation and an identity benchmark."""

__version__ = "0.1.0"
