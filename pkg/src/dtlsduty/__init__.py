"""DTLS handshake duration and energy over duty-cycled link layers."""

__version__ = "0.1.0"
