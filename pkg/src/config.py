"""
Configuration defaults for the fiducial forest toolkit
"""
import os
from typing import Dict, Any, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


DEFAULTS: Dict[str, Any] = {
    # Forest parameters
    "n_trees": 1000,
    "min_node_size": 5,
    "mtry": None,        # None -> ceil(sqrt(p))
    "max_leaves": None,  # None -> floor(n/10) + 1, capped at n - 4
    "sse": "refit",      # refit | honest

    # Fiducial sampling
    "draws": 1000,
    "level": 0.95,

    # Reproducibility / execution
    "seed": 0,
    "workers": 1,
    "log_dir": "logs",

    # Desk-scale experiment defaults
    "reps": 200,
    "experiment_trees": 500,
    "experiment_draws": 500,
    "hist_bins": 30,
    "test_fraction": 0.2,
    "test_size": None,   # rows; overrides test_fraction
    "splits": 20,
}

# Environment variable -> (config key, parser)
ENV_OVERRIDES = {
    "FART_SEED": ("seed", int),
    "FART_WORKERS": ("workers", int),
    "FART_LOG_DIR": ("log_dir", str),
    "FART_LEVEL": ("level", float),
}


def get_config(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Get configuration with optional overrides

    Precedence is explicit overrides, then environment, then DEFAULTS.
    Overrides whose value is None are ignored so unset CLI flags fall through.

    Args:
        overrides: Dictionary of values to override defaults

    Returns:
        Complete configuration dictionary
    """
    config = DEFAULTS.copy()

    for env_name, (key, parse) in ENV_OVERRIDES.items():
        raw = os.getenv(env_name)
        if raw not in (None, ""):
            config[key] = parse(raw)

    if overrides:
        config.update({k: v for k, v in overrides.items() if v is not None})

    # joblib convention: -1 uses every core
    if config["workers"] is not None and config["workers"] < 1:
        config["workers"] = -1

    return config
