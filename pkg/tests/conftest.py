import numpy as np
import pytest

from warpkit.core import LabeledDataset, LabeledSeries, validate_series


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_series(rng, n_frames, n_channels):
    return validate_series(rng.normal(size=(n_frames, n_channels)))


def make_dataset(rng, n_items=6, n_channels=2, frames=(3, 6), n_classes=2,
                 one_subject_per_item=True):
    """Random dataset; subjects are unique per item unless told otherwise."""
    items = []
    for k in range(n_items):
        T = int(rng.integers(frames[0], frames[1] + 1))
        series = make_series(rng, T, n_channels)
        label = f"c{k % n_classes}"
        subject = f"s{k}" if one_subject_per_item else f"s{(k // n_classes) % 2}"
        items.append(LabeledSeries(series, label, subject))
    return LabeledDataset(tuple(items))
