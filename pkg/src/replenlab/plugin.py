import os
import sys

import pluggy
import py

from replenlab import hookspec

hookimpl = pluggy.HookimplMarker("replenlab")

_ROOT_KEYWORD = ("replenlab",)

log = py.log.Producer("replenlab")
py.log.setconsumer(_ROOT_KEYWORD, None)


def setup_logging(debug=False, logfile=None):
    """Route the ``replenlab`` log producers.

    Silent unless ``debug``; with ``logfile`` messages go to that file,
    otherwise to stderr.
    """
    if not debug:
        py.log.setconsumer(_ROOT_KEYWORD, None)
    elif logfile:
        py.log.setconsumer(_ROOT_KEYWORD, py.log.Path(str(logfile), append=True))
    else:
        py.log.setconsumer(_ROOT_KEYWORD, py.log.STDERR)


@hookimpl(trylast=True)
def replenlab_auto_num_workers():
    try:
        import psutil
    except ImportError:
        pass
    else:
        count = psutil.cpu_count(logical=False) or psutil.cpu_count()
        if count:
            return count
    try:
        from os import sched_getaffinity

        def cpu_count():
            return len(sched_getaffinity(0))

    except ImportError:
        cpu_count = os.cpu_count
    try:
        n = cpu_count()
    except NotImplementedError:
        return 1
    return n if n else 1


def parse_numprocesses(s):
    if s == "auto":
        return "auto"
    elif s is not None:
        return int(s)


def resolve_numprocesses(value, pluginmanager=None):
    """Turn a ``--numprocesses`` value into a worker count (0 = in-process)."""
    if value == "auto":
        pm = pluginmanager or get_plugin_manager()
        return pm.hook.replenlab_auto_num_workers()
    return int(value or 0)


@hookimpl
def replenlab_addoption(parser):
    group = parser.add_argument_group("distributed simulation")
    group.add_argument(
        "-n",
        "--numprocesses",
        dest="numprocesses",
        metavar="numprocesses",
        type=parse_numprocesses,
        default=None,
        help="fan parameter tabulation out to NUM local worker processes, "
        "'auto' uses one worker per CPU; 0 simulates in-process",
    )
    group.add_argument(
        "--max-worker-restart",
        dest="maxworkerrestart",
        type=int,
        default=None,
        help="maximum number of workers that can be restarted "
        "when crashed (set to zero to disable this feature)",
    )
    group = parser.add_argument_group("logging")
    group.add_argument(
        "--debug",
        action="store_true",
        default=False,
        help="emit internal log messages to stderr (or --logfile)",
    )
    group.add_argument(
        "--logfile", metavar="PATH", default=None, help="append log messages to PATH"
    )


@hookimpl(trylast=True)
def replenlab_make_scheduler(cells, numnodes, log):
    from replenlab.scheduler import LoadScheduling

    return LoadScheduling(cells, numnodes, log=log)


@hookimpl(trylast=True)
def replenlab_make_solver(problem):
    from replenlab.or_select import default_solver

    return default_solver(problem)


@hookimpl(trylast=True)
def replenlab_make_method(name, context):
    from replenlab.experiment import make_builtin_method

    return make_builtin_method(name, context)


_pluginmanager = None


def get_plugin_manager():
    """Return the process-wide plugin manager, creating it on first use.

    Third party plugins are loaded from the ``replenlab`` entry point group.
    """
    global _pluginmanager
    if _pluginmanager is None:
        pm = pluggy.PluginManager("replenlab")
        pm.add_hookspecs(hookspec)
        pm.register(sys.modules[__name__], "replenlab.plugin")
        pm.load_setuptools_entrypoints("replenlab")
        _pluginmanager = pm
    return _pluginmanager
