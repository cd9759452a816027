import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numerics", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("numerics")


@pytest.fixture
def line(capsys):
    """Print a line past pytest's output capture."""

    def emit(text: str) -> None:
        with capsys.disabled():
            print(text)

    return emit
