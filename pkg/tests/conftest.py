from __future__ import annotations

import pytest

import helpers


@pytest.fixture
def green_repo(tmp_path):
    repo = tmp_path / "repo"
    repo.mkdir()
    helpers.make_green_repo(str(repo))
    return repo


@pytest.fixture
def build_config():
    return helpers.command_build_config()
