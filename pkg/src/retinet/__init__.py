"""Intrinsic image decomposition with reflection-model losses and a Retinex-style two-stage network."""

__version__ = "0.1.0"
