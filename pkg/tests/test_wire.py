import json
import os

import numpy as np
import pytest

from tilecascade import wire
from tilecascade.errors import MalformedFrameError

GOLDEN = json.load(open(os.path.join(os.path.dirname(__file__), "golden", "pxb1_frames.json")))


def feed(blob):
    # read_exact over a byte string
    state = {"off": 0}

    def read_exact(n):
        chunk = blob[state["off"] : state["off"] + n]
        assert len(chunk) == n, "test feed exhausted"
        state["off"] += n
        return chunk

    return read_exact


class TestGoldenVectors:
    def test_hello(self):
        assert wire.encode_hello().hex() == GOLDEN["hello"]

    def test_hello_ack(self):
        f = GOLDEN["hello_ack_fields"]
        ack = wire.HelloAck(
            model_name=f["model_name"],
            accepted_timesteps=tuple(f["accepted_timesteps"]),
            min_timestep=f["min_timestep"],
            channels=f["channels"],
            patch_h=f["patch_h"],
            patch_w=f["patch_w"],
        )
        assert wire.encode_hello_ack(ack).hex() == GOLDEN["hello_ack"]
        ftype, payload = wire.read_frame(feed(bytes.fromhex(GOLDEN["hello_ack"])))
        assert ftype == wire.HELLO_ACK
        assert wire.parse_hello_ack(payload) == ack

    def test_denoise_req(self):
        f = GOLDEN["denoise_req_fields"]
        lat = np.array(f["latent"], dtype=np.float32).reshape(f["channels"], f["height"], f["width"])
        req = wire.DenoiseRequest(
            channels=f["channels"],
            height=f["height"],
            width=f["width"],
            timestep=f["timestep"],
            guidance=f["guidance"],
            prompt=f["prompt"],
            latent=lat,
        )
        assert wire.encode_denoise_req(req).hex() == GOLDEN["denoise_req"]
        ftype, payload = wire.read_frame(feed(bytes.fromhex(GOLDEN["denoise_req"])))
        assert ftype == wire.DENOISE_REQ
        back = wire.parse_denoise_req(payload)
        assert back.prompt == f["prompt"]
        assert back.timestep == f["timestep"]
        assert np.array_equal(back.latent, lat)

    def test_denoise_rsp(self):
        f = GOLDEN["denoise_rsp_fields"]
        noise = np.array(f["noise"], dtype=np.float32).reshape(f["channels"], f["height"], f["width"])
        assert wire.encode_denoise_rsp(noise).hex() == GOLDEN["denoise_rsp"]
        ftype, payload = wire.read_frame(feed(bytes.fromhex(GOLDEN["denoise_rsp"])))
        assert ftype == wire.DENOISE_RSP
        assert np.array_equal(wire.parse_denoise_rsp(payload), noise)

    def test_error(self):
        f = GOLDEN["error_fields"]
        assert wire.encode_error(f["code"], f["message"]).hex() == GOLDEN["error"]
        ftype, payload = wire.read_frame(feed(bytes.fromhex(GOLDEN["error"])))
        assert wire.parse_error(payload) == (f["code"], f["message"])


class TestRoundTrips:
    def test_denoise_roundtrip_random_latent(self, rng):
        lat = rng.normal(size=(4, 8, 8)).astype(np.float32)
        req = wire.DenoiseRequest(4, 8, 8, 999, 7.5, "px éü", lat)
        blob = wire.encode_denoise_req(req)
        ftype, payload = wire.read_frame(feed(blob))
        back = wire.parse_denoise_req(payload)
        assert back.prompt == req.prompt
        assert np.array_equal(back.latent, lat)

    def test_empty_accepted_timesteps_means_all(self):
        ack = wire.HelloAck("m", (), 0, 4, 64, 64)
        ftype, payload = wire.read_frame(feed(wire.encode_hello_ack(ack)))
        assert ftype == wire.HELLO_ACK
        assert wire.parse_hello_ack(payload).accepted_timesteps == ()


class TestMalformed:
    def test_bad_magic(self):
        blob = b"XXXX" + bytes.fromhex(GOLDEN["hello"])[4:]
        with pytest.raises(MalformedFrameError):
            wire.read_frame(feed(blob))

    def test_unknown_frame_type(self):
        good = bytes.fromhex(GOLDEN["hello"])
        blob = good[:4] + bytes([99]) + good[5:]
        with pytest.raises(MalformedFrameError):
            wire.read_frame(feed(blob))

    def test_truncated_rsp_payload(self):
        with pytest.raises(MalformedFrameError):
            wire.parse_denoise_rsp(bytes(8))

    def test_rsp_length_mismatch(self):
        import struct

        payload = struct.pack("<III", 1, 2, 2) + b"\x00" * 8  # needs 16 data bytes
        with pytest.raises(MalformedFrameError):
            wire.parse_denoise_rsp(payload)

    def test_oversized_length_rejected(self):
        import struct

        header = wire.MAGIC + struct.pack("<BQ", wire.HELLO, 1 << 60)
        with pytest.raises(MalformedFrameError):
            wire.decode_frame_header(header)
