import pytest

from pathlib import Path

from geoerasure import (
    CandidateSet,
    Country,
    MockBackend,
    ProbDist,
    candidate_set_from_files,
    load_ground_truth,
)
from geoerasure.prompts import expand, load_subject_config, load_templates

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def candidate_set() -> CandidateSet:
    return candidate_set_from_files(
        FIXTURES / "aliases.json", FIXTURES / "population.csv"
    )


@pytest.fixture(scope="session")
def ground_truth(candidate_set):
    return load_ground_truth(FIXTURES / "population.csv", candidate_set)


@pytest.fixture(scope="session")
def mock_backend() -> MockBackend:
    return MockBackend.from_file(FIXTURES / "mock_table.tsv")


@pytest.fixture(scope="session")
def prompt_set():
    templates = load_templates(FIXTURES / "templates.json")
    subjects = load_subject_config(FIXTURES / "subjects.json")
    return expand(templates, subjects)


@pytest.fixture()
def abc_candidate_set() -> CandidateSet:
    return CandidateSet(
        (Country("A", ("A",)), Country("B", ("B",)), Country("C", ("C",)))
    )


@pytest.fixture()
def worked_example(abc_candidate_set):
    p_true = ProbDist(abc_candidate_set, (0.5, 0.3, 0.2))
    p = ProbDist(abc_candidate_set, (0.7, 0.25, 0.05))
    return p_true, p
