import numpy as np
import pytest

from voxloop.profiles import ProfileSet, TargetProfile


@pytest.fixture
def tumor_profiles() -> ProfileSet:
    """Two targets with non-overlapping phrases, as a deployment would
    configure them."""
    return ProfileSet(
        profiles=(
            TargetProfile(
                name="brain tumor",
                synonyms=("brain lesion",),
                intensity_range=(250.0, 350.0),
                min_area=4,
                grow_tolerance=60.0,
            ),
            TargetProfile(
                name="liver tumor",
                synonyms=("hepatic mass",),
                intensity_range=(80.0, 160.0),
                min_area=4,
                grow_tolerance=40.0,
            ),
        )
    )


@pytest.fixture
def lesion_profile() -> TargetProfile:
    """Matches the block/noise-slab phantom generators."""
    return TargetProfile(
        name="lesion",
        synonyms=("the lesion",),
        intensity_range=(250.0, 350.0),
        min_area=4,
        grow_tolerance=60.0,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260821)
