import pytest

from irseg.manifest import load_manifest
from irseg.synth import SceneConfig, write_dataset


@pytest.fixture(scope="session")
def default_dataset_path(tmp_path_factory):
    """Stock synthetic scene (80x60, 12 frames, 7 train / 5 test), seed 0."""
    return write_dataset(SceneConfig(seed=0),
                         tmp_path_factory.mktemp("scene-default"))


@pytest.fixture(scope="session")
def default_manifest(default_dataset_path):
    return load_manifest(default_dataset_path)


@pytest.fixture(scope="session")
def easy_dataset_path(tmp_path_factory):
    """High-separability preset used by smoke tests that assert a high J."""
    return write_dataset(SceneConfig.easy(seed=0),
                         tmp_path_factory.mktemp("scene-easy"))


@pytest.fixture(scope="session")
def easy_manifest(easy_dataset_path):
    return load_manifest(easy_dataset_path)
