"""Few-shot UMRF task-graph parsing for multimodal operator commands."""
from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(str(resources.files("umrf_forge") / "data" / name))
