"""HTTP client for fetching Incidents1M images from their source URLs."""

from dataclasses import dataclass

import requests

from crisisvit import __version__

# Retrying client errors (404, 410 ...) never helps: the image is gone.
# 408 and 429 say "not now" rather than "never".
PERMANENT_STATUS = frozenset(range(400, 500)) - {408, 429}


def parse_retry_after(value: str | None) -> float | None:
    """Seconds from a ``Retry-After`` header; HTTP-date values are ignored."""
    if value is None:
        return None
    try:
        seconds = float(value.strip())
    except ValueError:
        return None
    return max(seconds, 0.0)


@dataclass(frozen=True)
class FetchResult:
    """Outcome of one GET: the body on success, a reason otherwise."""

    url: str
    content: bytes | None = None
    reason: str | None = None
    status_code: int | None = None
    retry_after: float | None = None  # seconds the host asked us to wait

    @property
    def ok(self) -> bool:
        return self.content is not None

    @property
    def retryable(self) -> bool:
        """Transport errors, 5xx, 408 and 429 may succeed on a later attempt."""
        return not self.ok and (self.status_code is None or self.status_code not in PERMANENT_STATUS)


class ImageClient:
    """Thin wrapper over a ``requests.Session`` with image-friendly headers.

    Sessions are not shared between threads; the crawler keeps one client
    per worker.
    """

    def __init__(self, timeout: float = 10.0) -> None:
        self.timeout = timeout
        self.session = requests.Session()
        self.session.headers.update(
            {
                "accept": "image/avif,image/webp,image/png,image/jpeg,image/*;q=0.8,*/*;q=0.5",
                "user-agent": f"crisisvit/{__version__} (+research image crawler)",
            }
        )

    def fetch(self, url: str) -> FetchResult:
        """GET one image URL.

        Network failures are returned as a reason, never raised.
        """
        try:
            response = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as e:
            return FetchResult(url, reason=f"{type(e).__name__}: {e}")
        if response.status_code != 200:
            return FetchResult(
                url,
                reason=f"HTTP {response.status_code}",
                status_code=response.status_code,
                retry_after=parse_retry_after(response.headers.get("retry-after")),
            )
        if not response.content:
            return FetchResult(url, reason="empty response body", status_code=response.status_code)
        return FetchResult(url, content=response.content, status_code=response.status_code)

    def close(self) -> None:
        self.session.close()
