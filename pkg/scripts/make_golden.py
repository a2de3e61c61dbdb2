"""Regenerate the committed golden stream and its decoded image.

The golden pair pins the wire format and full encoder determinism: tests
re-encode the same crop with the same arguments and require byte equality
with the committed stream, and decode the committed stream expecting the
committed pixels. Run only when the format intentionally changes.
"""

from pathlib import Path

from n2l.codec import decode_stream, encode_image
from n2l.imageio import load_image, save_png

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

GOLDEN_ARGS = dict(setting_id=0, seed=0, init_seed=0, steps=50, eval_every=10)


def main():
    image = load_image(DATA / "natural_64.png")
    enc = encode_image(image, **GOLDEN_ARGS)
    stream_path = DATA / "golden_64.n2l"
    stream_path.write_bytes(enc.stream)
    dec = decode_stream(enc.stream)
    png_path = DATA / "golden_64.png"
    save_png(png_path, dec.image_u8)
    print(f"wrote {stream_path} ({len(enc.stream)} bytes, {enc.bpp:.4f} bpp)")
    print(f"wrote {png_path} (post-quant {enc.post_quant_psnr_db:.2f} dB)")


if __name__ == "__main__":
    main()
