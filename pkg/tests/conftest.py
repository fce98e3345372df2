"""Shared fixtures: tiny images, manifests, a toy benchmark and a local image server."""

import io
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest
from PIL import Image

from crisisvit.models.config import ModelConfig
from crisisvit.models.labels import BENCHMARK_TASKS
from crisisvit.models.records import DatasetManifestEntry, RetrievalStatus
from crisisvit.services.crawler import store_image
from crisisvit.services.manifest import entry_id_for, write_manifest

PALETTE = [
    (220, 30, 30),
    (30, 200, 40),
    (30, 40, 220),
    (230, 220, 30),
    (200, 30, 210),
    (30, 210, 210),
    (240, 140, 20),
    (120, 120, 120),
]


def png_bytes(color: tuple[int, int, int], size: int = 32, variant: int = 0) -> bytes:
    """Solid-color PNG; ``variant`` shifts one pixel so equal colors give distinct bytes."""
    img = Image.new("RGB", (size, size), color)
    img.putpixel((variant % size, (variant // size) % size), (variant * 7 % 256, variant * 13 % 256, 0))
    buffer = io.BytesIO()
    img.save(buffer, format="PNG")
    return buffer.getvalue()


def write_png(path: Path, color: tuple[int, int, int], size: int = 32, variant: int = 0) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png_bytes(color, size, variant))
    return path


def fetched_entry(
    image_dir: Path,
    index: int,
    incident: tuple[str, ...] = (),
    place: tuple[str, ...] = (),
    color: tuple[int, int, int] | None = None,
) -> DatasetManifestEntry:
    """A fetched manifest entry whose image is already in the store."""
    url = f"http://images.test/{index}.png"
    digest = store_image(image_dir, png_bytes(color or PALETTE[index % len(PALETTE)], variant=index))
    return DatasetManifestEntry(
        entry_id=entry_id_for(url),
        url=url,
        incident_labels=incident,
        place_labels=place,
        status=RetrievalStatus.FETCHED,
        digest=digest,
    )


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig.tiny()


@pytest.fixture
def image_dir(tmp_path: Path) -> Path:
    path = tmp_path / "images"
    path.mkdir()
    return path


@pytest.fixture
def place_entries(image_dir: Path) -> list[DatasetManifestEntry]:
    """32 fetched entries over four place classes, colored by class."""
    places = ["forest", "beach", "highway", "river"]
    entries = []
    for i in range(32):
        cls = i % len(places)
        incident = ("flooded",) if cls == 3 else ()
        entries.append(fetched_entry(image_dir, i, incident=incident, place=(places[cls],), color=PALETTE[cls]))
    return entries


@pytest.fixture
def manifest_file(tmp_path: Path, place_entries: list[DatasetManifestEntry]) -> Path:
    return write_manifest(place_entries, tmp_path / "manifest.jsonl")


def build_benchmark(root: Path, per_class: dict[str, int] | None = None) -> Path:
    """Write all four tasks with class-colored images.

    ``per_class`` gives the number of images per class in each split.
    """
    per_class = per_class or {"train": 2, "validation": 1, "test": 1}
    files = {"train": "train.tsv", "validation": "dev.tsv", "test": "test.tsv"}
    for task_id, classes in BENCHMARK_TASKS.items():
        for split, count in per_class.items():
            rows = ["image_id\timage_path\tclass_label"]
            for c, label in enumerate(classes):
                for k in range(count):
                    image_id = f"{task_id}-{split}-{c}-{k}"
                    relative = Path("images") / task_id / f"{image_id}.png"
                    write_png(root / relative, PALETTE[c % len(PALETTE)], variant=k)
                    rows.append(f"{image_id}\t{relative}\t{label}")
            (root / task_id).mkdir(parents=True, exist_ok=True)
            (root / task_id / files[split]).write_text("\n".join(rows) + "\n")
    return root


@pytest.fixture
def benchmark_root(tmp_path: Path) -> Path:
    return build_benchmark(tmp_path / "benchmark")


class _ImageHandler(BaseHTTPRequestHandler):
    """``/live/<n>`` -> 200 PNG, ``/flaky/<n>`` -> 503, anything else -> 404.

    ``/ratelimited/<n>`` answers 429 with ``Retry-After: 0`` on the first hit
    and serves the image afterwards.
    """

    def do_GET(self) -> None:  # noqa: N802
        server = self.server
        with server.lock:  # type: ignore[attr-defined]
            server.hits[self.path] += 1  # type: ignore[attr-defined]
            hits = server.hits[self.path]  # type: ignore[attr-defined]
        if self.path.startswith("/ratelimited/") and hits == 1:
            self.send_response(429)
            self.send_header("Retry-After", "0")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if self.path.startswith(("/live/", "/ratelimited/")):
            body = png_bytes(PALETTE[0], size=8, variant=int(self.path.rsplit("/", 1)[1]))
            self.send_response(200)
            self.send_header("Content-Type", "image/png")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        status = 503 if self.path.startswith("/flaky/") else 404
        self.send_response(status)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def log_message(self, format: str, *args: object) -> None:
        pass


class ImageServer:
    """Local HTTP server standing in for the image hosts."""

    def __init__(self) -> None:
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _ImageHandler)
        self.httpd.hits = Counter()  # type: ignore[attr-defined]
        self.httpd.lock = threading.Lock()  # type: ignore[attr-defined]
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def hits(self) -> Counter:
        return self.httpd.hits  # type: ignore[attr-defined]

    def urls(self, live: int, total: int) -> list[str]:
        return [f"{self.base_url}/{'live' if i < live else 'gone'}/{i}" for i in range(total)]


@pytest.fixture
def image_server():
    server = ImageServer()
    server.thread.start()
    yield server
    server.httpd.shutdown()
    server.httpd.server_close()
