import numpy as np
import pytest


class StubStream:
    """Replays a fixed draw sequence; stands in for a RandomStream."""

    def __init__(self, values):
        self.values = list(float(v) for v in values)
        self.counter = 0

    def uniform_open(self, n):
        if len(self.values) < n:
            raise AssertionError("stub stream exhausted")
        out = np.array(self.values[:n], dtype=np.float64)
        del self.values[:n]
        self.counter += n
        return out


@pytest.fixture
def stub_stream():
    return StubStream
