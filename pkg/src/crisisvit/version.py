"""Version information."""

from crisisvit import __version__

__all__ = ["__version__"]
