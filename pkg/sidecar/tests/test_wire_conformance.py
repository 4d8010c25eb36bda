"""Byte-level conformance against the shared golden frame vectors."""

import json
import os

import numpy as np
import pytest

from pxb_sidecar import wire

GOLDEN = json.load(open(os.path.join(os.path.dirname(__file__), "golden", "pxb1_frames.json")))


def strip_header(blob_hex, expect_type):
    blob = bytes.fromhex(blob_hex)
    ftype, length = wire.parse_header(blob[: wire.HEADER.size])
    assert ftype == expect_type
    payload = blob[wire.HEADER.size :]
    assert len(payload) == length
    return payload


def test_hello_frame_bytes():
    assert wire.encode_frame(wire.HELLO, b"").hex() == GOLDEN["hello"]


def test_hello_ack_decodes_and_reencodes():
    f = GOLDEN["hello_ack_fields"]
    payload = strip_header(GOLDEN["hello_ack"], wire.HELLO_ACK)
    caps = wire.parse_hello_ack(payload)
    assert caps.model_name == f["model_name"]
    assert list(caps.accepted_timesteps) == f["accepted_timesteps"]
    assert caps.min_timestep == f["min_timestep"]
    assert (caps.channels, caps.patch_h, caps.patch_w) == (f["channels"], f["patch_h"], f["patch_w"])
    assert wire.encode_hello_ack(caps).hex() == GOLDEN["hello_ack"]


def test_denoise_req_decodes_and_reencodes():
    f = GOLDEN["denoise_req_fields"]
    payload = strip_header(GOLDEN["denoise_req"], wire.DENOISE_REQ)
    req = wire.parse_request(payload)
    assert req.prompt == f["prompt"]
    assert req.timestep == f["timestep"]
    assert abs(req.guidance - f["guidance"]) < 1e-6
    lat = np.array(f["latent"], dtype=np.float32).reshape(f["channels"], f["height"], f["width"])
    assert np.array_equal(req.latent, lat)
    assert wire.encode_request(req).hex() == GOLDEN["denoise_req"]


def test_denoise_rsp_decodes_and_reencodes():
    f = GOLDEN["denoise_rsp_fields"]
    payload = strip_header(GOLDEN["denoise_rsp"], wire.DENOISE_RSP)
    noise = wire.parse_response(payload)
    expect = np.array(f["noise"], dtype=np.float32).reshape(f["channels"], f["height"], f["width"])
    assert np.array_equal(noise, expect)
    assert wire.encode_response(noise).hex() == GOLDEN["denoise_rsp"]


def test_error_frame():
    f = GOLDEN["error_fields"]
    payload = strip_header(GOLDEN["error"], wire.ERROR)
    assert wire.parse_error(payload) == (f["code"], f["message"])
    assert wire.encode_error(f["code"], f["message"]).hex() == GOLDEN["error"]


def test_bad_magic_raises():
    blob = b"XXXX" + bytes.fromhex(GOLDEN["hello"])[4:]
    with pytest.raises(wire.FrameError):
        wire.parse_header(blob[: wire.HEADER.size])
