import pytest

from voidsurrogate.datastore import build_dataset, make_split
from voidsurrogate.fieldgen import Case

SEED = 0
_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])


@pytest.fixture(scope="session")
def ds_flat():
    return build_dataset(Case.NON_ROTATED, 250, seed=SEED)


@pytest.fixture(scope="session")
def ds_tilted():
    return build_dataset(Case.ROTATED, 250, seed=SEED)


@pytest.fixture(scope="session")
def base_split():
    return make_split(250, 100, 150, SEED)


@pytest.fixture(scope="session")
def small_split():
    return make_split(250, 40, 150, SEED)
