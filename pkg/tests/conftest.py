import random
from pathlib import Path

import pytest

from enclavemine.logio import load_csv
from enclavemine.model import Event, EventLog, log_from_events

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def hospital_log():
    return load_csv(DATA / "hospital.csv")


@pytest.fixture(scope="session")
def pharma_log():
    return load_csv(DATA / "pharma.csv", iid_column="HospitalCaseID")


@pytest.fixture(scope="session")
def clinic_log():
    return load_csv(DATA / "clinic.csv", iid_column="TreatmentID")


@pytest.fixture(scope="session")
def three_partitions(hospital_log, pharma_log, clinic_log):
    return {"hospital": hospital_log, "pharma": pharma_log, "clinic": clinic_log}


def brute_union(*logs) -> EventLog:
    """Independent merge oracle: dump every event and sort."""
    events = [ev for log in logs for ev in log]
    ids = [ev.event_id for ev in events]
    assert len(ids) == len(set(ids)), "oracle misuse: overlapping logs"
    return EventLog(
        tuple(sorted(events, key=lambda e: (e.timestamp, e.provisioner_id, e.event_id)))
    )


def make_random_log(
    rng: random.Random,
    n_cases: int,
    provisioners,
    *,
    min_events: int = 2,
    max_events: int = 8,
    id_prefix: str = "e",
) -> EventLog:
    """Random multi-provisioner log; tight timestamp range forces tie-breaks."""
    activities = ["A", "B", "C", "D", "E", "F", "G", "H"]
    events = []
    counter = 0
    for c in range(n_cases):
        iid = "c%04d" % c
        t = rng.randint(0, 50)
        for _ in range(rng.randint(min_events, max_events)):
            t += rng.randint(0, 3)
            events.append(
                Event(
                    event_id="%s%06d" % (id_prefix, counter),
                    iid=iid,
                    activity=rng.choice(activities),
                    timestamp=t,
                    provisioner_id=rng.choice(provisioners),
                )
            )
            counter += 1
    return log_from_events(events)
