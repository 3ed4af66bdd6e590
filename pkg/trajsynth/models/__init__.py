# trajsynth/models/__init__.py
"""
Trained backend storage and the packaged ground-truth HMM.
"""

import os

from .models import ModelManager

ACCEPTANCE_HMM_PATH = os.path.join(os.path.dirname(__file__), 'hmm_acceptance_v1.json')

__all__ = ['ACCEPTANCE_HMM_PATH', 'ModelManager', 'load_acceptance_hmm']


def load_acceptance_hmm():
    """The 3-state, 5-feature HMM used for the end-to-end experiments."""
    from ..hmm import HmmSpec
    return HmmSpec.load(ACCEPTANCE_HMM_PATH)
