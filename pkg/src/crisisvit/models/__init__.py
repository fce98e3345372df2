"""Data models for crisisvit."""
