import io
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from PIL import Image

from groundview.errors import CoverageError, RetryableFetchError
from groundview.geodata import GeoLocation, Mosaic, TileClient, TileClientConfig, WorldFile, fetch_overhead_patch


def _png(arr):
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def mosaic_file(tmp_path, np_rng):
    pixels = np_rng.integers(0, 256, size=(40, 60, 3), dtype=np.uint8)
    wf = WorldFile(0.001, 0.0, 0.0, -0.001, 10.0005, 50.0395)
    path = tmp_path / "m.png"
    Mosaic(pixels, wf).save(path)
    return path, pixels, wf


def test_world_file_round_trip(tmp_path):
    wf = WorldFile(0.5, 0.0, 0.0, -0.25, 3.0, 7.0)
    wf.write(tmp_path / "a.pgw")
    assert WorldFile.read(tmp_path / "a.pgw") == wf
    loc = wf.center_of(4, 9)
    assert wf.pixel_of(loc) == (4, 9)


def test_mosaic_crop_matches_array_slice(mosaic_file):
    path, pixels, wf = mosaic_file
    client = TileClient(TileClientConfig(mosaic_path=path))
    loc = wf.center_of(20, 30)
    patch = client.fetch(loc, 10)
    assert np.array_equal(patch.pixels, pixels[15:25, 25:35])
    assert patch.center == loc


def test_mosaic_outside_raises_coverage(mosaic_file):
    path, _, wf = mosaic_file
    client = TileClient(TileClientConfig(mosaic_path=path))
    with pytest.raises(CoverageError):
        client.fetch(wf.center_of(1, 1), 10)
    with pytest.raises(CoverageError):
        client.fetch(GeoLocation(0.0, 0.0), 10)


def test_second_fetch_is_cache_hit(tmp_path, monkeypatch):
    calls = []
    image = _png(np.full((20, 20, 3), 77, np.uint8))

    def fake_get(url):
        calls.append(url)
        return image

    monkeypatch.setenv("TEST_TILE_KEY", "s3cret")
    cfg = TileClientConfig(url_template="http://x/{lat}/{lon}/{size}?k={key}", api_key_env="TEST_TILE_KEY", cache_dir=tmp_path)
    client = TileClient(cfg, http_get=fake_get)
    loc = GeoLocation(51.5, -0.1)
    a = client.fetch(loc)
    b = client.fetch(loc)
    assert len(calls) == 1 and "s3cret" in calls[0]
    assert (client.hits, client.misses) == (1, 1)
    assert a == b and (a.pixels == 77).all()
    # the key is not part of the cache identity
    assert all("s3cret" not in p.name for p in tmp_path.iterdir())
    monkeypatch.setenv("TEST_TILE_KEY", "other")
    assert TileClient(cfg, http_get=fake_get).fetch(loc) == a
    assert len(calls) == 1


class _Handler(BaseHTTPRequestHandler):
    body = _png(np.arange(30 * 30 * 3, dtype=np.uint8).reshape(30, 30, 3))

    def do_GET(self):
        if self.path.startswith("/fail"):
            self.send_response(503)
            self.end_headers()
            return
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(self.body)))
        self.end_headers()
        self.wfile.write(self.body)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_port}"
    srv.shutdown()


def test_http_endpoint_center_crop(server, tmp_path):
    cfg = TileClientConfig(url_template=server + "/tile?lat={lat}&lon={lon}&z={zoom}", cache_dir=tmp_path)
    patch = fetch_overhead_patch(cfg, GeoLocation(10.0, 20.0), 10)
    full = np.arange(30 * 30 * 3, dtype=np.uint8).reshape(30, 30, 3)
    assert np.array_equal(patch.pixels, full[10:20, 10:20])


def test_http_5xx_is_retryable(server):
    cfg = TileClientConfig(url_template=server + "/fail?lat={lat}", timeout=5)
    with pytest.raises(RetryableFetchError):
        TileClient(cfg).fetch(GeoLocation(1.0, 2.0))
