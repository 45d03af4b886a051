import numpy as np
import pytest

from qcert import Box, NeuralNetwork


@pytest.fixture
def net_a():
    """Two-input relu net; exact maximum of f over [0,1]^2 is 1."""
    return NeuralNetwork(
        [
            (np.array([[1.0, -1.0], [0.0, 1.0]]), np.zeros(2)),
            (np.array([[1.0, 1.0]]), np.zeros(1)),
        ],
        "relu",
    )


@pytest.fixture
def unit_box():
    return Box([0.0, 0.0], [1.0, 1.0])
