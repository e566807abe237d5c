import numpy as np
import pytest

from augselect.dataio import Dataset


def blobs(n=30, d=3, seed=0, separation=1.0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1, -1)
    y[:2] = (1, -1)
    X = rng.normal(size=(n, d)) + separation * y[:, None] / np.sqrt(d)
    return Dataset(X, y)


@pytest.fixture
def small_data():
    return blobs()


@pytest.fixture(scope="session")
def mnist5k():
    pytest.importorskip("mlxtend")
    from augselect.dataio import load_mnist5k

    return load_mnist5k()


def tiny_images(n, seed, size=8, signal=160):
    """Noisy rasters whose class decides which half is brighter."""
    from augselect.dataio import RawImage

    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        label = 1 if i % 2 == 0 else -1
        px = rng.integers(0, 90, size=(size, size))
        half = slice(0, size // 2) if label == 1 else slice(size // 2, size)
        px[:, half] += rng.integers(0, signal, size=(size, size // 2))
        pairs.append((RawImage(np.clip(px, 0, 255).astype(np.uint8)), label))
    return pairs


def tiny_task(n=24, n_test=16, seed=0, spec=None, signal=160):
    from augselect.harness import task_from_images
    from augselect.transforms import TransformSpec

    spec = spec or TransformSpec("translate", (1,))
    train_pairs = tiny_images(n, seed, signal=signal)
    images = [img for img, _ in train_pairs]
    train = Dataset(np.vstack([img.features() for img in images]), [lab for _, lab in train_pairs], images=images)
    return task_from_images(train, tiny_images(n_test, seed + 1000, signal=signal), spec, meta={"fixture": "tiny"})


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
