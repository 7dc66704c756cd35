import pytest

from amplab.models import build_model, flat_torus, multiply_twisted_torus, multiply_warped_torus


@pytest.fixture(scope="session")
def flat3():
    return flat_torus(3, [1, 1, 1])


@pytest.fixture(scope="session")
def warped3():
    return multiply_warped_torus(["2 + cos(x0)", "1.5 + sin(x0)"])


@pytest.fixture(scope="session")
def twisted3():
    return multiply_twisted_torus(["2 + cos(x0)*cos(x1)", "1.5 + 0.5*sin(x0 + x2)"])


@pytest.fixture(scope="session")
def frame4():
    return build_model("frame_model")


# -- acceptance summary: one line per criterion at the end of the run ---------------------

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not (rep.when == "setup" and rep.outcome != "passed")):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "parts": []})
    if hasattr(rep, "wasxfail"):
        state = "xfail" if rep.outcome == "skipped" else "xpass"
    else:
        state = rep.outcome
    detail = "; ".join(v for k, v in rep.user_properties if k == "detail")
    entry["parts"].append((item.name, state, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        states = [s for _, s, _ in entry["parts"]]
        if all(s == "passed" for s in states):
            verdict = "PASS"
        elif any(s in ("failed", "xpass") for s in states):
            verdict = "FAIL"
        else:
            verdict = "FAIL (known, strict xfail)"
        notes = [f"{name}: {d}" if d else name for name, s, d in entry["parts"] if d or s != "passed"]
        tr.write_line(f"criterion {number:2d}  {verdict:26s} {entry['title']}")
        for note in notes:
            tr.write_line(f"{'':32s}{note}")
