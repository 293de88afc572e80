import numpy as np
import pytest

from pathattr.bench import make_toy_suite
from pathattr.models import load_model
from pathattr.toydata import load_manifest_images

TOY_SEED = 0


@pytest.fixture(scope="session")
def toy_suite(tmp_path_factory):
    """Trained toy suite shared by the bench and acceptance tests (one training run)."""
    out = tmp_path_factory.mktemp("toy-suite")
    return make_toy_suite(seed=TOY_SEED, out_dir=out)


@pytest.fixture(scope="session")
def toy_model(toy_suite):
    return load_model(toy_suite.model_path)


@pytest.fixture(scope="session")
def toy_test_set(toy_suite):
    ids, images, labels = load_manifest_images(toy_suite.test_manifest)
    return ids, images, labels


@pytest.fixture(scope="session")
def correctly_classified(toy_model, toy_test_set):
    """(image, label) pairs the toy model gets right, in manifest order."""
    ids, images, labels = toy_test_set
    probs = toy_model.predict_many(images)
    keep = probs.argmax(axis=1) == np.asarray(labels)
    return [(img, lab) for img, lab, ok in zip(images, labels, keep) if ok]
