import pytest
from hypothesis import settings

from hybridel.kb_store import Entity, EntityStore

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def amber_store() -> EntityStore:
    ents = [
        Entity("Q1202607", "AMBER Alert", "AMBER Alert is a child abduction alert system. It started in 1996.",
               "emergency alert system", aliases=("Amber",), pagerank=2.0, link_count=120),
        Entity("Q8197166", "Amber, Rajasthan", "Amber is a town in Rajasthan. It has a fort.",
               "town in India", aliases=("Amber",), pagerank=1.0, link_count=40),
        Entity("Q290856", "Amber Rose", "Amber Rose is an American model. She hosts a podcast.",
               "American model", pagerank=1.5, link_count=80),
        Entity("Q_bird1", "Bluebird", "The bluebird is a songbird.", "species of bird"),
    ]
    return EntityStore({e.id: e for e in ents})


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
