import pytest

from bifurcata import create_settings
from bifurcata.models import Settings
from config import config, get_log_level


def test_testing_settings():
    settings = create_settings('testing')

    assert settings.jobs == 1
    assert settings.null_tol is None
    assert settings.null_tol_rel == config['testing'].NULL_TOL_REL
    assert settings.grid_m == config['testing'].GRID_M


def test_overrides():
    settings = create_settings('testing', null_tol=1e-9, rho=0.25)

    assert settings.null_tol == 1e-9
    assert settings.rho == 0.25


def test_unknown_config_name_uses_default():
    assert create_settings('staging') == Settings.from_config(config['default'])


def test_environment_selects_config(monkeypatch):
    monkeypatch.setenv('BIFURCATA_ENV', 'testing')

    assert create_settings() == Settings.from_config(config['testing'])


@pytest.mark.parametrize('value, expected', [
    ('debug', 'DEBUG'),
    ('WARNING', 'WARNING'),
    ('chatty', 'INFO'),
])
def test_get_log_level(monkeypatch, value, expected):
    monkeypatch.setenv('BIFURCATA_LOG_LEVEL', value)

    assert get_log_level() == expected


def test_get_log_level_unset(monkeypatch):
    monkeypatch.delenv('BIFURCATA_LOG_LEVEL', raising=False)

    assert get_log_level('ERROR') == 'ERROR'
