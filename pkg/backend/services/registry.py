from typing import Callable, Dict, List
import logging
from functools import wraps

from backend.utils.errors import ConfigError

logger = logging.getLogger(__name__)


class ModelSpecRegistry:
    """Registry mapping model kinds (benchmark, svd, pca) to their design builders."""

    def __init__(self):
        self._builders: Dict[str, Callable] = {}

    def register(self, kind: str) -> Callable:
        """Decorator to register a design builder.

        Args:
            kind: Model kind as written in plan files

        Returns:
            Decorator function
        """
        def decorator(func: Callable) -> Callable:
            @wraps(func)
            def wrapper(*args, **kwargs):
                return func(*args, **kwargs)

            self._builders[kind] = wrapper
            logger.debug(f"Registered design builder: {kind}")
            return wrapper

        return decorator

    def get_builder(self, kind: str) -> Callable:
        """Get the design builder for a model kind.

        Raises:
            ConfigError: If the kind is not registered
        """
        builder = self._builders.get(kind)
        if builder is None:
            available = ", ".join(sorted(self._builders.keys()))
            raise ConfigError(f"Model kind '{kind}' not found. Available kinds: {available}")
        return builder

    def list_kinds(self) -> List[str]:
        return list(self._builders.keys())

    def log_registered_kinds(self) -> None:
        kinds = sorted(self._builders.keys())
        if kinds:
            logger.info(f"Registered model kinds: {', '.join(kinds)}")
        else:
            logger.warning("No model kinds registered")


# Global registry instance; builders register themselves in backend.services.harness
registry = ModelSpecRegistry()
