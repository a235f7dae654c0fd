import numpy as np
import pytest

import cladlab as cl


@pytest.fixture(scope="session")
def small_spec():
    return cl.DatasetSpec(num_classes=9, image_size=32, samples_per_class=12, seed=7)


@pytest.fixture(scope="session")
def small_base(small_spec):
    return cl.gen_base(small_spec)


@pytest.fixture(scope="session")
def small_variants(small_base):
    return {kind: cl.make_variant(small_base, kind, seed=11) for kind in cl.ALL_VARIANTS}


@pytest.fixture(scope="session")
def default_base():
    """The full default base set (9 x 200, seed 7); shared because it is slow."""
    return cl.gen_base(cl.DatasetSpec())


@pytest.fixture(scope="session")
def tiny_train_set():
    """3-class 16x16 set, enough to exercise training quickly."""
    spec = cl.DatasetSpec(num_classes=3, image_size=16, samples_per_class=30, seed=5)
    return cl.gen_base(spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
