#!/usr/bin/env python
# -*- coding: utf-8 -*-

import logging
import os
import sys

import yaml

__version__ = "1.0.0"

logger = logging.getLogger(__name__)
logger.setLevel(logging.DEBUG)
logger.addHandler(logging.NullHandler())


CONFIG = {
    "EXTERNAL_CONFIG_FNAME": "~/.config/netflow-synth.yaml",
    "BUNDLE_FORMAT_VERSION": "1.0.0",
    "USERLOG_MESSAGE_FMT": "%(asctime)s %(message)s",
    "LOG_DATETIME_FMT": "%Y-%m-%d|%H:%M:%S",
    "USER_LOGLEVEL": 20,
    "PROGRESS_BARS": False,
    # dataset
    "DAY_LENGTH_S": 86400.0,
    "CSV_SCHEMA": {
        "src": "src",
        "dst": "dst",
        "start": "start",
        "end": "end",
        "duration": None,
        "port": "port",
        "protocol": "protocol",
        "port_protocol": None,
    },
    # structure
    "N1_CANDIDATES": [2, 3],
    "KRONFIT_ITERATIONS": 100,
    "KRONFIT_LR": 0.02,
    "KRONFIT_SWAPS_PER_NODE": 10,
    "KRONFIT_CLAMP_EPS": 1e-4,
    "KRON_POWER_MAX_SIDE": 4096,
    "KRON_MAX_DRAWS_FACTOR": 1000,
    "KRON_COLLISION_WARN_RATE": 0.5,
    # features
    "FEATURE_MODES": 10,
    "MODE_PRUNE_WEIGHT": 1e-3,
    "EM_MAX_ITER": 100,
    "EM_TOL": 1e-6,
    "EM_MAX_ROWS": 50000,
    # alignment
    "ALIGN_THRESHOLD": 0.0,
    "ALIGN_TREES": 200,
    "ALIGN_DEPTH": 4,
    "ALIGN_LR": 0.1,
    "ALIGN_SAMPLE_FRACTION": 1.0,
    "ALIGN_PAIR_BUDGET": 50000,
    "ALIGN_SCORING_CHUNK_ROWS": 200000,
    "ALIGN_EDGE_SAMPLE": None,
    # ensembles
    "ENSEMBLE_SIZE": 20,
    "WORKERS": 1,
    "MASTER_SEED": 0,
}


class NetflowSynthError(Exception):
    """
    Base for every error the package raises on purpose.
    """


class DataError(NetflowSynthError):
    pass


class ConfigError(NetflowSynthError):
    pass


def die(err=None, exitcode=1):
    """
    Exits gracefully, writing colored <err_message> to stderr via logging.

    Use in except block of expected exceptions!
    """
    if isinstance(err, Exception):
        logger.exception(err)
    elif isinstance(err, str):
        logger.error(err)
    sys.exit(exitcode)


def logging_excepthook(exc_type, exc_value, exc_traceback):
    """
    Logging unhandled exceptions with critical level.
    """
    if exc_type == KeyboardInterrupt:
        pass
    else:
        logger.critical("Unhandled exception!", exc_info=(exc_type, exc_value, exc_traceback))
    die(exitcode=3)


def update_config(config_fname, required=False):
    """
    Only fields, existing in CONFIG will be updated.

    :param config_fname: a full path to user config file (yaml mapping)
    :type config_fname: str
    :param required: a missing file is a ConfigError (user-named file) instead of a debug message
    """
    config_fname = os.path.expanduser(config_fname)
    try:
        with open(config_fname, encoding="utf-8") as conffile:
            config_dict = yaml.safe_load(conffile) or {}
    except IOError as e:
        if required:
            raise ConfigError(f"Can not read config file {config_fname}: {e}") from e
        logger.debug("No user config file has found at %s! Will use built-in default", config_fname)
        return
    except yaml.YAMLError as e:
        raise ConfigError(f"Error in config syntax ({config_fname}):\n{e}") from e

    if not isinstance(config_dict, dict):
        raise ConfigError(f"{config_fname} should hold a mapping, got {type(config_dict).__name__}")
    for key, value in config_dict.items():
        if key in CONFIG:
            CONFIG[key] = value
        else:
            logger.warning("Unknown config key %s in %s; skipping", key, config_fname)
