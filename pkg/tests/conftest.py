import numpy as np
import pytest

from fpvolseg.phantoms import PhantomSpec, generate_phantom
from fpvolseg.volume import Volume3D, stack_channels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_case():
    ct, pet, mask = generate_phantom(PhantomSpec(shape=(24, 24, 24), n_lesions=1, lesion_radius_range=(3, 4), seed=7))
    return stack_channels(ct, pet), mask


def mask_volume(arr, spacing=(1.5, 1.5, 1.5)):
    return Volume3D(np.asarray(arr, dtype=bool), spacing, "mask")
