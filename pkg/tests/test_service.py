"""HTTP service: endpoint contracts, byte-exact round trip, capacity gate."""

import io
import threading
import time

import numpy as np
import pytest
from PIL import Image

import scat_inpaint.service as service_mod
from scat_inpaint.data import signed_to_unit, synthetic_textures
from scat_inpaint.errors import ConfigurationError
from scat_inpaint.masks import generate_freeform_mask, ones_mask
from scat_inpaint.service import CapacityGate, ServiceConfig, create_app, inpaint_u8

from conftest import TINY_SIZE

fastapi_testclient = pytest.importorskip("fastapi.testclient")
TestClient = fastapi_testclient.TestClient


def png_bytes_rgb(arr_u8):
    buf = io.BytesIO()
    Image.fromarray(arr_u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_mask(mask):
    buf = io.BytesIO()
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_rgb(data):
    img = Image.open(io.BytesIO(data))
    img.load()
    return np.asarray(img, dtype=np.uint8)


@pytest.fixture
def sample_image():
    img = signed_to_unit(synthetic_textures(1, TINY_SIZE, seed=33)[0])
    return np.rint(img.transpose(1, 2, 0) * 255).astype(np.uint8)


@pytest.fixture
def client(tiny_run):
    ckpt, _, _ = tiny_run
    app = create_app(ServiceConfig(checkpoint_path=ckpt, max_image_dim=128))
    with TestClient(app) as c:
        yield c


def post_inpaint(client, image_u8, mask, **form):
    return client.post(
        "/api/inpaint",
        files={
            "image": ("image.png", png_bytes_rgb(image_u8), "image/png"),
            "mask": ("mask.png", png_bytes_mask(mask), "image/png"),
        },
        data=form,
    )


def test_service_config_validation(tmp_path):
    with pytest.raises(ConfigurationError, match="port"):
        ServiceConfig(checkpoint_path="x", port=0)
    with pytest.raises(ConfigurationError, match="max_concurrent"):
        ServiceConfig(checkpoint_path="x", max_concurrent_inferences=0)


def test_health_reports_checkpoint_step(client):
    r = client.get("/api/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["model_step"] == 1
    assert body["image_size"] == TINY_SIZE


def test_model_info_is_constant_config_echo(client, tiny_run):
    _, _, config = tiny_run
    first = client.get("/api/model-info").json()
    assert first["image_size"] == config.image_size
    assert first["ablation"] == config.ablation
    assert client.get("/api/model-info").json() == first


def test_all_valid_mask_round_trips_exactly(client, sample_image):
    r = post_inpaint(client, sample_image, ones_mask(TINY_SIZE, TINY_SIZE))
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert np.array_equal(decode_rgb(r.content), sample_image)


def test_valid_pixels_copied_from_request(client, sample_image):
    m = generate_freeform_mask(TINY_SIZE, TINY_SIZE, seed=4)
    r = post_inpaint(client, sample_image, m)
    assert r.status_code == 200
    out = decode_rgb(r.content)
    valid = m == 1.0
    assert np.array_equal(out[valid], sample_image[valid])


def test_raw_flag_returns_generator_output(client, sample_image):
    m = ones_mask(TINY_SIZE, TINY_SIZE)
    composite = decode_rgb(post_inpaint(client, sample_image, m).content)
    raw = decode_rgb(post_inpaint(client, sample_image, m, raw="1").content)
    assert raw.shape == composite.shape
    assert np.array_equal(composite, sample_image)
    assert not np.array_equal(raw, sample_image)


def test_missing_field_is_400(client, sample_image):
    r = client.post(
        "/api/inpaint",
        files={"image": ("image.png", png_bytes_rgb(sample_image), "image/png")},
    )
    assert r.status_code == 400
    assert "mask" in r.json()["error"]


def test_undecodable_image_is_400(client):
    r = client.post(
        "/api/inpaint",
        files={
            "image": ("image.png", b"not a png", "image/png"),
            "mask": ("mask.png", png_bytes_mask(ones_mask(8, 8)), "image/png"),
        },
    )
    assert r.status_code == 400


def test_rgb_mask_is_400(client, sample_image):
    r = client.post(
        "/api/inpaint",
        files={
            "image": ("image.png", png_bytes_rgb(sample_image), "image/png"),
            "mask": ("mask.png", png_bytes_rgb(sample_image), "image/png"),
        },
    )
    assert r.status_code == 400
    assert "grayscale" in r.json()["error"]


def test_size_mismatch_is_422(client, sample_image):
    r = post_inpaint(client, sample_image, ones_mask(16, 16))
    assert r.status_code == 422
    assert "match" in r.json()["error"]


def test_oversize_image_is_422(tiny_run, sample_image):
    ckpt, _, _ = tiny_run
    app = create_app(ServiceConfig(checkpoint_path=ckpt, max_image_dim=16))
    with TestClient(app) as client:
        r = post_inpaint(client, sample_image, ones_mask(TINY_SIZE, TINY_SIZE))
        assert r.status_code == 422
        assert "max_image_dim" in r.json()["error"]


def test_non_multiple_of_four_size_is_padded(client, sample_image):
    img = sample_image[:30, :26]
    m = ones_mask(30, 26)
    m[5:12, 3:17] = 0.0
    r = post_inpaint(client, img, m)
    assert r.status_code == 200
    out = decode_rgb(r.content)
    assert out.shape == (30, 26, 3)
    assert np.array_equal(out[m == 1.0], img[m == 1.0])


def test_capacity_gate_unit():
    gate = CapacityGate(1, wait_slots=0)
    assert gate.admit()
    assert not gate.admit()
    gate.release()
    assert gate.admit()
    gate.release()

    queued = CapacityGate(1, wait_slots=1)
    assert queued.admit()
    t = threading.Thread(target=lambda: (queued.admit(), queued.release()))
    t.start()
    time.sleep(0.05)
    assert not queued.admit()  # 1 running + 1 waiting, third refused
    queued.release()
    t.join(timeout=2)
    assert not t.is_alive()


def test_concurrent_posts_at_capacity_one_serialize(tiny_run, sample_image, monkeypatch):
    ckpt, _, _ = tiny_run
    active = {"now": 0, "peak": 0}
    lock = threading.Lock()
    real = inpaint_u8

    def slow_inpaint(*args, **kwargs):
        with lock:
            active["now"] += 1
            active["peak"] = max(active["peak"], active["now"])
        time.sleep(0.2)
        out = real(*args, **kwargs)
        with lock:
            active["now"] -= 1
        return out

    monkeypatch.setattr(service_mod, "inpaint_u8", slow_inpaint)
    app = create_app(
        ServiceConfig(checkpoint_path=ckpt, max_concurrent_inferences=1, max_image_dim=128)
    )
    mask = ones_mask(TINY_SIZE, TINY_SIZE)
    statuses = []
    with TestClient(app) as client:
        def worker():
            statuses.append(post_inpaint(client, sample_image, mask).status_code)

        threads = [threading.Thread(target=worker) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=30)
    assert statuses == [200, 200]
    assert active["peak"] == 1


def test_beyond_queue_capacity_is_429(tiny_run, sample_image, monkeypatch):
    ckpt, _, _ = tiny_run
    release = threading.Event()
    started = threading.Event()
    real = inpaint_u8

    def blocking_inpaint(*args, **kwargs):
        started.set()
        release.wait(timeout=30)
        return real(*args, **kwargs)

    monkeypatch.setattr(service_mod, "inpaint_u8", blocking_inpaint)
    monkeypatch.setattr(service_mod, "WAIT_SLOTS", 0)
    app = create_app(
        ServiceConfig(checkpoint_path=ckpt, max_concurrent_inferences=1, max_image_dim=128)
    )
    mask = ones_mask(TINY_SIZE, TINY_SIZE)
    first_status = []
    with TestClient(app) as client:
        t = threading.Thread(
            target=lambda: first_status.append(
                post_inpaint(client, sample_image, mask).status_code
            )
        )
        t.start()
        assert started.wait(timeout=10)
        r = post_inpaint(client, sample_image, mask)
        assert r.status_code == 429
        assert r.headers["retry-after"] == "1"
        release.set()
        t.join(timeout=30)
    assert first_status == [200]


def test_static_frontend_mount(tiny_run, tmp_path):
    ckpt, _, _ = tiny_run
    dist = tmp_path / "dist"
    dist.mkdir()
    (dist / "index.html").write_text("<!doctype html><title>inpaint</title>")
    app = create_app(ServiceConfig(checkpoint_path=ckpt), frontend_dir=str(dist))
    with TestClient(app) as client:
        r = client.get("/")
        assert r.status_code == 200
        assert "inpaint" in r.text
        assert client.get("/api/health").status_code == 200


def test_no_frontend_dir_is_fine(tiny_run):
    ckpt, _, _ = tiny_run
    app = create_app(ServiceConfig(checkpoint_path=ckpt), frontend_dir=None)
    with TestClient(app) as client:
        assert client.get("/").status_code == 404
