import pytest

from ising_poisson.patterns import LocalPattern, format_pattern


@pytest.fixture
def single_pat(tmp_path):
    path = tmp_path / "single.pat"
    path.write_text(format_pattern(LocalPattern.single_plus(1, 1)))
    return str(path)
