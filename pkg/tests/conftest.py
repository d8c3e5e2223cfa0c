import pytest

from triact.datasets import load_manifest
from triact.synthetic import SynthSpec, generate
from triact.taxonomy import load_taxonomy


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """One small rendered dataset shared by dataset/training/CLI tests."""
    root = tmp_path_factory.mktemp("mini_data")
    spec = SynthSpec(
        num_events=2, num_sets=2, num_elements=4, clips_per_element=3,
        test_clips_per_element=2, frames_per_clip=40, frame_size=48,
        noise_level=0.05, seed=5,
    )
    return spec, generate(spec, root)


@pytest.fixture(scope="session")
def mini_taxonomy(mini_dataset):
    _, out = mini_dataset
    return load_taxonomy(out.taxonomy_path)


@pytest.fixture(scope="session")
def mini_train_rows(mini_dataset, mini_taxonomy):
    _, out = mini_dataset
    return load_manifest(out.train_manifest_path, mini_taxonomy)


@pytest.fixture(scope="session")
def mini_test_rows(mini_dataset, mini_taxonomy):
    _, out = mini_dataset
    return load_manifest(out.test_manifest_path, mini_taxonomy)
