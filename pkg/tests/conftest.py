import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    results = request.config.stash[_RESULTS]
    seen = []

    def record(number, passed, detail):
        results[number] = (bool(passed), detail)
        seen.append(number)

    yield record
    number = getattr(request.function, "criterion_number", None)
    if number is not None and number not in seen:
        results[number] = (False, "did not finish (exception before the check)")


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
