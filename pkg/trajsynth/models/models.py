# trajsynth/models/models.py
"""
Versioned storage for trained generator backends.

Each version lives in the models directory as backend_<version>.json plus a
training_metadata_<version>.json sidecar (parameters, budget ledger,
discretizer summary).
"""

import json
import logging
import os
import re
from typing import Any, Dict, List, Optional

from ..generator import DpMarkovBackend

logger = logging.getLogger(__name__)

_BACKEND_FILE = re.compile(r'^backend_(.+)\.json$')


class ModelManager:
    """
    Manager for trained backends with versioning and an active version.
    """

    def __init__(self, models_dir: str = 'models'):
        self.models_dir = models_dir
        self.models: Dict[str, DpMarkovBackend] = {}
        self.metadata: Dict[str, Dict[str, Any]] = {}
        self.active_model_version: Optional[str] = None
        self.loaded_versions: List[str] = []

    def backend_path(self, version: str) -> str:
        return os.path.join(self.models_dir, f'backend_{version}.json')

    def metadata_path(self, version: str) -> str:
        return os.path.join(self.models_dir, f'training_metadata_{version}.json')

    def save_model(self, backend: DpMarkovBackend, version: str,
                   metadata: Optional[Dict[str, Any]] = None) -> str:
        """
        Write a backend and its training metadata.

        Returns:
            str: Path of the backend file
        """
        os.makedirs(self.models_dir, exist_ok=True)
        path = self.backend_path(version)
        with open(path, 'w') as f:
            json.dump(backend.to_dict(), f, indent=2, sort_keys=True)

        sidecar = {
            'model_type': type(backend).__name__,
            'model_version': version,
            'columns': backend.schema.names,
            'code_space_sizes': backend.discretizer.sizes,
            'ledger': backend.ledger,
        }
        sidecar.update(metadata or {})
        with open(self.metadata_path(version), 'w') as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)

        self.models[version] = backend
        self.metadata[version] = sidecar
        if version not in self.loaded_versions:
            self.loaded_versions.append(version)
        logger.info(f'Backend version {version} saved to {path}')
        return path

    def load_model(self, version: str = 'v1', model_path: Optional[str] = None) -> bool:
        """
        Load a specific backend version.

        Returns:
            bool: True if the backend loaded, False otherwise
        """
        if model_path is None:
            model_path = self.backend_path(version)
        if not os.path.exists(model_path):
            logger.error(f'Backend file not found: {model_path}')
            return False
        try:
            with open(model_path) as f:
                backend = DpMarkovBackend.from_dict(json.load(f))
        except (ValueError, KeyError) as e:
            logger.error(f'Failed to load backend version {version}: {e}')
            return False

        metadata_path = self.metadata_path(version)
        if os.path.exists(metadata_path):
            with open(metadata_path) as f:
                self.metadata[version] = json.load(f)
        self.models[version] = backend
        if version not in self.loaded_versions:
            self.loaded_versions.append(version)
        if self.active_model_version is None:
            self.active_model_version = version
        logger.info(f'Backend version {version} loaded from {model_path}')
        return True

    def load_all_models(self) -> Dict[str, bool]:
        """
        Load every backend_<version>.json in the models directory.

        Returns:
            Dict[str, bool]: Load status by version
        """
        if not os.path.isdir(self.models_dir):
            logger.warning(f'Models directory {self.models_dir} does not exist')
            return {}
        results = {}
        for file_name in sorted(os.listdir(self.models_dir)):
            match = _BACKEND_FILE.match(file_name)
            if match:
                results[match.group(1)] = self.load_model(match.group(1))
        return results

    def get_model(self, version: Optional[str] = None) -> DpMarkovBackend:
        version = version or self.active_model_version
        if version not in self.models:
            raise ValueError(f'Backend version {version} not loaded')
        return self.models[version]

    def get_model_info(self, version: str) -> Dict[str, Any]:
        if version not in self.models:
            return {'error': f'Backend version {version} not loaded'}
        backend = self.models[version]
        info = {
            'version': version,
            'model_type': type(backend).__name__,
            'loaded': True,
            'columns': backend.schema.names,
            'max_length': max(backend.lengths.support),
            'active': version == self.active_model_version,
        }
        if version in self.metadata:
            info['ledger'] = self.metadata[version].get('ledger')
        return info

    def get_all_models_info(self) -> Dict[str, Any]:
        return {version: self.get_model_info(version) for version in self.loaded_versions}

    def set_active_version(self, version: str) -> bool:
        if version in self.models:
            self.active_model_version = version
            logger.info(f'Active backend version set to {version}')
            return True
        logger.warning(f'Cannot set active version: backend {version} not loaded')
        return False
