from replenlab.errors import ReplenlabError
from replenlab.plugin import get_plugin_manager, hookimpl

try:
    from replenlab._version import version as __version__
except ImportError:  # not installed through setuptools_scm
    __version__ = "0.0.0"

__all__ = [
    "__version__",
    "ReplenlabError",
    "get_plugin_manager",
    "hookimpl",
]
