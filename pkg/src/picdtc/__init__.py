"""Partially information coupled duo-binary turbo codes on the BEC."""
