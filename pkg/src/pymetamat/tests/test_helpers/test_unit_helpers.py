import logging

import pytest

from pymetamat.exceptions import ConfigError
from pymetamat.helpers import check_known_keys, combine_configs, normalise_key, parse_int_list, setup_logger

pytestmark = pytest.mark.unit


def test_check_known_keys_accepts_subset():
    check_known_keys({"k": "1"}, ["k", "eps"])


def test_check_known_keys_lists_unknown():
    with pytest.raises(ConfigError, match="bar, foo"):
        check_known_keys({"foo": "1", "bar": "2", "k": "3"}, ["k"])


@pytest.mark.parametrize("raw,expected", [("K", "k"), (" m-list ", "m_list"), ("FINE_M", "fine_m")])
def test_normalise_key(raw, expected):
    assert normalise_key(raw) == expected


def test_combine_configs_file_and_env(tmp_path, monkeypatch):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nK=5\nexport eps='0.01'\nm-list=1-3\n")
    monkeypatch.setenv("PYMETAMAT_EPS", "0.2")
    combined = combine_configs(str(path))
    assert combined == {"k": "5", "eps": "0.2", "m_list": "1-3"}


def test_combine_configs_without_env(tmp_path, monkeypatch):
    path = tmp_path / "run.cfg"
    path.write_text("eps=0.01\n")
    monkeypatch.setenv("PYMETAMAT_EPS", "0.2")
    assert combine_configs(str(path), load_env_vars=False) == {"eps": "0.01"}


def test_combine_configs_reads_dotenv(tmp_path, monkeypatch):
    (tmp_path / ".env").write_text("PYMETAMAT_K=7\nOTHER=1\n")
    monkeypatch.chdir(tmp_path)
    assert combine_configs(load_env_vars=False, load_dotenv=True) == {"k": "7"}


def test_combine_configs_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        combine_configs(str(tmp_path / "absent.cfg"))


def test_combine_configs_key_without_value(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("k\n")
    with pytest.raises(ConfigError):
        combine_configs(str(path), load_env_vars=False)


@pytest.mark.parametrize("text,expected", [
    ("1,2,3", [1, 2, 3]),
    ("1-4", [1, 2, 3, 4]),
    ("5, 1-2, 2", [1, 2, 5]),
    ("3,", [3]),
])
def test_parse_int_list(text, expected):
    assert parse_int_list(text) == expected


@pytest.mark.parametrize("text", ["", "a", "0,1", "4-2", "1.5"])
def test_parse_int_list_rejects(text):
    with pytest.raises(ConfigError):
        parse_int_list(text)


def test_setup_logger_does_not_duplicate_handlers(tmp_path):
    log_file = tmp_path / "run.log"
    logger = setup_logger("pymetamat.tests.handlers", level=logging.DEBUG, log_file=str(log_file))
    setup_logger("pymetamat.tests.handlers", level=logging.DEBUG, log_file=str(log_file))
    kinds = sorted(type(h).__name__ for h in logger.handlers)
    assert kinds == ["FileHandler", "StreamHandler"]
    assert logger.propagate is False
    logger.debug("written")
    for handler in logger.handlers:
        handler.flush()
    assert "written" in log_file.read_text()
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


def test_setup_logger_without_stream():
    logger = setup_logger("pymetamat.tests.quiet", stream=None)
    assert logger.handlers == []
