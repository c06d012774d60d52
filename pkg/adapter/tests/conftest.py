import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def asset_root(tmp_path):
    """A tiny asset corpus: two 16x16 images plus region masks."""
    root = tmp_path / "assets"
    (root / "img").mkdir(parents=True)
    (root / "mask").mkdir()
    (root / "cand").mkdir()

    red = np.zeros((16, 16, 3), dtype=np.uint8)
    red[:, :, 0] = 200
    Image.fromarray(red).save(root / "img" / "a.png")

    blue = np.zeros((16, 16, 3), dtype=np.uint8)
    blue[:, :, 2] = 200
    Image.fromarray(blue).save(root / "cand" / "0.png")
    Image.fromarray(red).save(root / "cand" / "1.png")

    # mask 0 keeps the left half, mask 1 keeps the right half
    left = np.zeros((16, 16), dtype=np.uint8)
    left[:, :8] = 255
    Image.fromarray(left).save(root / "mask" / "a0.png")
    Image.fromarray(255 - left).save(root / "mask" / "a1.png")
    return root


def score_request(sample_id="s", n_candidates=2, active_text=True, active_image=(True, True)):
    return {
        "v": 1,
        "type": "score",
        "sample_id": sample_id,
        "query": {
            "image": [
                {"id": 0, "asset": "asset://img/a.png", "mask": "asset://mask/a0.png", "active": active_image[0]},
                {"id": 1, "asset": "asset://img/a.png", "mask": "asset://mask/a1.png", "active": active_image[1]},
            ],
            "text": [
                {"id": 0, "surface": "red", "active": active_text},
                {"id": 1, "surface": "car", "active": active_text},
            ],
        },
        "candidates": [
            {"id": i, "asset": f"asset://cand/{i}.png"} for i in range(n_candidates)
        ],
    }
