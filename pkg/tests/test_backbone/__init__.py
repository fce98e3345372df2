"""Tests for backbone modules."""
