import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
