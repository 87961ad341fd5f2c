import pytest

from helpers import matrix, record
from intentpool.core.trajectory import TrajectorySet


@pytest.fixture
def line_matrix():
    """1-D points {0, 1, 10, 11}: two well separated pairs."""
    return matrix([0.0, 1.0, 10.0, 11.0])


@pytest.fixture
def twenty_questions_set():
    return TrajectorySet.from_records(
        [
            record("g1", [("Is it a fruit?", "Yes."), ("Is it red?", "No."), ("Is it a banana?", None)], 1.0, "guess"),
            record("g2", [("Is it a fruit?", "No."), ("Is it an animal?", "Yes."), ("Is it a cat?", None)], 0.0, "guess"),
            record("g3", [("Is it alive?", "Yes."), ("Is it red?", "Yes."), ("Is it an apple?", None)], 1.0, "guess"),
        ]
    )
