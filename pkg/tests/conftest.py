import copy

import pytest

from Config import (
    DEFAULT_SCENARIO_PATH,
    apply_overrides,
    read_scenario_file,
    scenario_from_dict,
)


@pytest.fixture
def scenario_data():
    return read_scenario_file(DEFAULT_SCENARIO_PATH)


@pytest.fixture
def default_config(scenario_data):
    return scenario_from_dict(scenario_data)


@pytest.fixture
def make_config(scenario_data):
    """
    Builds a variant of the bundled scenario; keyword arguments replace
    top-level sections of the raw mapping. A slots value goes through the
    same override path as the command line, so congestion windows are cut
    to the shorter horizon.
    """

    def factory(slots=None, **sections):
        data = copy.deepcopy(scenario_data)
        data.update(sections)
        return scenario_from_dict(apply_overrides(data, slots=slots))

    return factory
