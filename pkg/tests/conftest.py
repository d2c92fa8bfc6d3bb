"""Shared pytest configuration."""

from residua.testforms import TestForm

# not a test class, despite the name
TestForm.__test__ = False
