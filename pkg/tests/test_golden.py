"""Golden-pair tests: the committed stream must stay decodable forever.

``golden_64.n2l`` and ``golden_64.png`` were produced by
``scripts/make_golden.py``. Any change that shifts a single coded bit or
reconstructed pixel shows up here before it ships.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from n2l.bitstream import stream_info
from n2l.codec import decode_stream, encode_image
from n2l.imageio import load_image

DATA = Path(__file__).parent / "data"

GOLDEN_ARGS = dict(setting_id=0, seed=0, init_seed=0, steps=50, eval_every=10)


def test_committed_stream_decodes_to_committed_pixels():
    result = decode_stream((DATA / "golden_64.n2l").read_bytes())
    with Image.open(DATA / "golden_64.png") as img:
        expected = np.asarray(img.convert("RGB"), dtype=np.uint8)
    assert np.array_equal(result.image_u8, expected)


def test_golden_stream_headers():
    info = stream_info((DATA / "golden_64.n2l").read_bytes())
    assert (info["height"], info["width"]) == (64, 64)
    assert info["setting_id"] == 0
    assert info["flags"] == 0
    assert (info["seed"], info["init_seed"]) == (0, 0)


def test_reencoding_reproduces_committed_stream():
    image = load_image(DATA / "natural_64.png")
    enc = encode_image(image, **GOLDEN_ARGS)
    assert enc.stream == (DATA / "golden_64.n2l").read_bytes()
