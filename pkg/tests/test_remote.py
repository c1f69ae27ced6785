"""Wire protocol and remote-provider behavior against the loopback stub.

The stub runs on a real local socket (uvicorn in a thread) so retries,
serialization, and HTTP error mapping are all exercised end to end.
"""

import socket
import threading
import time

import numpy as np
import pytest
import uvicorn

from mvitex import wire
from mvitex.patching import PatchRect
from mvitex.remote import ENV_SCORER_URL, RemoteScoreProvider
from mvitex.scoring import (
    L2ScoreProvider,
    ScoreError,
    ScoreRequest,
    TargetImageSpec,
    score,
)
from mvitex.service.stub_scorer import create_stub_app


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class StubServer:
    def __init__(self, app):
        self.port = free_port()
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port, log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self):
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("stub server did not start")
            time.sleep(0.02)
        return f"http://127.0.0.1:{self.port}"

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=5)


@pytest.fixture(scope="module")
def stub_target():
    return np.random.default_rng(99).uniform(size=(64, 64, 3))


@pytest.fixture(scope="module")
def stub_url(stub_target):
    app = create_stub_app(
        provider=L2ScoreProvider(TargetImageSpec(stub_target, weight=1.0))
    )
    with StubServer(app) as url:
        yield url


def make_request(patch, run_id="loop", full_resolution=None, rect=None):
    size = patch.shape[0]
    return ScoreRequest(
        run_id=run_id,
        view_id=0,
        prompt_id=0,
        step=1,
        timestep=0.5,
        patch=patch,
        patch_rect=rect or PatchRect(0, 0, size),
        full_resolution=full_resolution or size,
    )


class TestWireCodec:
    def test_array_round_trip(self, rng):
        arr = rng.normal(size=(7, 5, 3))
        out = wire.decode_array(wire.encode_array(arr))
        np.testing.assert_allclose(out, arr, rtol=1e-6)
        assert out.shape == arr.shape

    def test_request_round_trip(self, rng):
        req = make_request(rng.uniform(size=(16, 16, 3)), rect=PatchRect(3, 4, 16),
                           full_resolution=32)
        back = wire.score_request_from_wire(wire.score_request_to_wire(req))
        assert back.run_id == req.run_id
        assert back.patch_rect == req.patch_rect
        assert back.full_resolution == 32
        np.testing.assert_allclose(back.patch, req.patch, rtol=1e-6)

    def test_payload_length_validated(self):
        with pytest.raises(ValueError):
            wire.decode_array({"data": "AAAA", "shape": [2, 2]})


class TestRemoteProvider:
    def test_loopback_matches_local_provider(self, stub_url, stub_target, rng):
        remote = RemoteScoreProvider(stub_url)
        local = L2ScoreProvider(TargetImageSpec(stub_target, weight=1.0))
        remote.register("loop", [{"id": 0, "text": "t"}])
        for i in range(20):
            patch = rng.uniform(size=(64, 64, 3))
            req = make_request(patch)
            got = score(remote, req)
            want = score(local, req)
            scale = max(np.abs(want.pixel_gradient).max(), 1e-12)
            err = np.abs(got.pixel_gradient - want.pixel_gradient).max() / scale
            assert err < 1e-6
        remote.close()

    def test_score_before_register_fails(self, stub_url, rng):
        remote = RemoteScoreProvider(stub_url)
        with pytest.raises(ScoreError) as exc:
            remote.score(make_request(rng.uniform(size=(8, 8, 3)), run_id="ghost"))
        assert "404" in str(exc.value)
        remote.close()

    def test_duplicate_register_conflicts(self, stub_url):
        remote = RemoteScoreProvider(stub_url)
        remote.register("dup", [{"id": 0, "text": "t"}])
        with pytest.raises(ScoreError) as exc:
            remote.register("dup", [{"id": 0, "text": "t"}])
        assert "409" in str(exc.value)
        remote.close()

    def test_health_endpoint(self, stub_url):
        remote = RemoteScoreProvider(stub_url)
        h = remote.health()
        assert h["status"] == "ok"
        assert h["model_id"] == "loopback-stub"
        remote.close()

    def test_server_down_errors_after_retries(self):
        remote = RemoteScoreProvider(
            f"http://127.0.0.1:{free_port()}", timeout=0.5, backoff_base=0.01
        )
        t0 = time.time()
        with pytest.raises(ScoreError) as exc:
            remote.score(make_request(np.zeros((8, 8, 3)), run_id="x"))
        assert "unreachable" in str(exc.value)
        assert time.time() - t0 < 10.0
        remote.close()

    def test_env_var_overrides_url(self, stub_url, monkeypatch):
        monkeypatch.setenv(ENV_SCORER_URL, stub_url)
        remote = RemoteScoreProvider("http://example.invalid:1")
        assert remote.url == stub_url
        remote.close()

    def test_run_aborts_cleanly_on_dead_scorer(self, cube_scene, tmp_path):
        # run ends aborted with the checkpoint flushed when the scorer is gone
        from mvitex.geometry import ViewSpec, look_at_camera
        from mvitex.optimizer import RunConfig, run
        from mvitex.schedules import JitterConfig, ResolutionSchedule, TimestepSchedule
        from mvitex.texture_field import HashGridConfig, HashGridField, MLPConfig

        remote = RemoteScoreProvider(
            f"http://127.0.0.1:{free_port()}", timeout=0.3, backoff_base=0.01
        )
        cfg = RunConfig(
            k_total=5, patch_size=64, learning_rate=1e-3,
            jitter=JitterConfig(c_max=0.0),
            resolution=ResolutionSchedule(initial=64, final=64),
            timestep=TimestepSchedule(), seed=0, view_selection="round_robin",
        )
        field = HashGridField.create(
            grid=HashGridConfig(levels=2, table_size_log2=10, base_resolution=8),
            mlp=MLPConfig(hidden_layers=1, hidden_width=8), seed=0,
        )
        view = ViewSpec(id=0, base_camera=look_at_camera([0, 0, 4], fov=30), prompt_id=0)
        result = run(cfg, cube_scene, [view], remote, field, out_dir=tmp_path / "o")
        assert result.status == "aborted"
        assert (tmp_path / "o" / "checkpoint.mvitex").exists()
        remote.close()


class TestStubValidation:
    def test_malformed_tensor_rejected(self, stub_url):
        import httpx

        payload = wire.score_request_to_wire(make_request(np.zeros((8, 8, 3))))
        payload["patch"]["data"] = "AAAA"
        resp = httpx.post(stub_url + "/score", json=payload, timeout=10)
        assert resp.status_code == 422

    def test_lora_step_counts(self, stub_url):
        import httpx

        httpx.post(stub_url + "/register",
                   json={"run_id": "lora", "prompts": [{"id": 0, "text": "x"}]},
                   timeout=10)
        for expected in (1, 2, 3):
            r = httpx.post(stub_url + "/lora_step", json={"run_id": "lora"}, timeout=10)
            assert r.json()["lora_steps"] == expected
