import pytest

from serhead.dataset import SyntheticSpec, generate_synthetic_dataset


@pytest.fixture(scope="session")
def small_data(tmp_path_factory):
    """Tiny separable train/dev manifests shared across trainer/CLI tests."""
    root = tmp_path_factory.mktemp("data")
    common = dict(num_layers=2, hidden=16, frames_min=8, frames_max=12)
    train = generate_synthetic_dataset(
        SyntheticSpec(counts=[6] * 8, seed=101, **common), root / "train")
    dev = generate_synthetic_dataset(
        SyntheticSpec(counts=[3] * 8, seed=102, **common), root / "dev")
    return root, train, dev
