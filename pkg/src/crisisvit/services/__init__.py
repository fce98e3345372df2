"""Business logic for crisisvit."""
