"""Texture-descriptor biometric recognition with multi-snapshot feature fusion."""

__version__ = "0.1.0"
