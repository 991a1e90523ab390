import pytest

_acceptance: dict = {}


@pytest.fixture
def criterion(request):
    """Attach a criterion number and a detail line to an acceptance test."""

    def record(number: int, detail: str = ""):
        request.node.user_properties.append(("criterion", number))
        request.node.user_properties.append(("detail", detail))

    return record


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    num = props["criterion"]
    prev = _acceptance.get(num)
    failed = report.failed or (prev is not None and prev[0] == "FAIL")
    if report.when == "call" or report.failed:
        _acceptance[num] = ("FAIL" if failed else "PASS", props.get("detail", ""), report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance):
        status, detail, nodeid = _acceptance[num]
        name = nodeid.rsplit("::", 1)[-1]
        line = f"criterion {num:2d}: {status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
