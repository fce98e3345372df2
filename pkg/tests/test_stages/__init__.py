"""Tests for pre-training stages."""
