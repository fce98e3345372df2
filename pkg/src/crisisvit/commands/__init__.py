"""Command implementations for the crisisvit CLI."""
