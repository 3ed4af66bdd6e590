# trajsynth/__init__.py
"""
trajsynth

Differentially private synthesis and evaluation of longitudinal tabular data,
where the privacy unit is a whole per-user table.
"""

import os
from typing import Any, Dict

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

__version__ = "1.0.0"


def get_settings(overrides: Dict[str, Any] = None) -> Dict[str, Any]:
    """Execution settings read from the environment (see .env.example)."""
    settings = {
        'LOG_LEVEL': os.getenv('LOG_LEVEL', 'INFO').upper(),
        'LOG_DIR': os.getenv('TRAJSYNTH_LOG_DIR', 'logs'),
        'N_JOBS': int(os.getenv('TRAJSYNTH_N_JOBS', '1')),
        'MODELS_DIR': os.getenv('TRAJSYNTH_MODELS_DIR', 'models'),
    }
    if overrides:
        settings.update(overrides)
    return settings


__all__ = ['get_settings', '__version__']
