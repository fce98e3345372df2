"""Tests for the image HTTP client."""

import pytest

from crisisvit.api.image_client import FetchResult, ImageClient, parse_retry_after


class TestImageClient:
    """Fetching from the local image server."""

    def test_fetch_live_image(self, image_server):
        client = ImageClient(timeout=5)
        result = client.fetch(f"{image_server.base_url}/live/3")
        client.close()
        assert result.ok
        assert result.status_code == 200
        assert result.content.startswith(b"\x89PNG")

    def test_missing_image_is_permanent(self, image_server):
        result = ImageClient(timeout=5).fetch(f"{image_server.base_url}/gone/3")
        assert not result.ok
        assert result.reason == "HTTP 404"
        assert not result.retryable

    def test_server_error_is_retryable(self, image_server):
        result = ImageClient(timeout=5).fetch(f"{image_server.base_url}/flaky/3")
        assert result.reason == "HTTP 503"
        assert result.retryable

    def test_rate_limit_is_retryable(self, image_server):
        result = ImageClient(timeout=5).fetch(f"{image_server.base_url}/ratelimited/3")
        assert result.reason == "HTTP 429"
        assert result.retryable
        assert result.retry_after == 0.0

    def test_connection_error_is_returned(self):
        result = ImageClient(timeout=1).fetch("http://127.0.0.1:9/x.png")
        assert not result.ok
        assert result.status_code is None
        assert result.retryable
        assert result.reason.startswith("ConnectionError")

    def test_user_agent_names_the_tool(self):
        client = ImageClient()
        assert client.session.headers["user-agent"].startswith("crisisvit/")


class TestFetchResult:
    def test_ok_result_is_not_retryable(self):
        assert not FetchResult("u", content=b"x", status_code=200).retryable

    @pytest.mark.parametrize(
        ("status", "retryable"), [(404, False), (410, False), (408, True), (429, True), (503, True)]
    )
    def test_retryable_statuses(self, status, retryable):
        assert FetchResult("u", reason=f"HTTP {status}", status_code=status).retryable is retryable


class TestParseRetryAfter:
    @pytest.mark.parametrize(
        ("value", "expected"),
        [(None, None), ("0", 0.0), (" 2.5 ", 2.5), ("-3", 0.0), ("Wed, 21 Oct 2015 07:28:00 GMT", None)],
    )
    def test_values(self, value, expected):
        assert parse_retry_after(value) == expected
