from datetime import datetime, timezone

import pytest

ACCEPTANCE_LINES: list[str] = []

from harvnet.ingest import EmailEvent
from harvnet.synth import ScenarioConfig, generate_scenario


def ev(ts, harvester="192.0.2.1", server="198.51.100.1", subject="cheap watches", delta=0):
    if isinstance(ts, str):
        ts = datetime.strptime(ts, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return EmailEvent(ts, harvester, server, subject, delta)


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario(ScenarioConfig(seed=7))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
