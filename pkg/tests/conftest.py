import numpy as np
import pytest
import skimage.data


@pytest.fixture(scope="session")
def natural_crops():
    """Three 128x128 natural-image crops with distinct content."""
    return {
        "camera": skimage.data.camera()[::4, ::4].astype(float),
        "moon": skimage.data.moon()[::4, ::4].astype(float),
        "coins": skimage.data.coins()[:256, :256][::2, ::2].astype(float),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
