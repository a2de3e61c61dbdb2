"""Regenerate the committed natural-image test fixtures.

Crops come from scikit-image's astronaut photograph so the repository
carries no third-party dataset files.
"""

from pathlib import Path

from PIL import Image
from skimage import data

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "data"


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    rgb = data.astronaut()  # 512x512x3 uint8
    crops = {
        "natural_256.png": rgb[64:320, 128:384],
        "natural_64.png": rgb[120:184, 200:264],
    }
    for name, crop in crops.items():
        path = OUT_DIR / name
        Image.fromarray(crop).save(path)
        print(f"wrote {path} {crop.shape}")


if __name__ == "__main__":
    main()
