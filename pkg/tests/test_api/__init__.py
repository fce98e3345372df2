"""Tests for API modules."""
