"""
replenlab hooks.

Plugins register implementations with ``replenlab.hookimpl`` on the plugin
manager returned by :func:`replenlab.plugin.get_plugin_manager`.  Hooks marked
``firstresult`` stop at the first non-None result; the built-in
implementations are registered ``trylast`` so any plugin can override them.
"""
import pluggy

hookspec = pluggy.HookspecMarker("replenlab")


@hookspec
def replenlab_addoption(parser):
    """ add command line options to the argparse ``parser``. """


@hookspec(firstresult=True)
def replenlab_auto_num_workers():
    """
    Return the number of workers to spawn when ``--numprocesses=auto`` is given.
    """


@hookspec(firstresult=True)
def replenlab_make_scheduler(cells, numnodes, log):
    """ return a cell scheduler implementation """


@hookspec
def replenlab_setupnodes(specs):
    """ called before any worker node is set up. """


@hookspec
def replenlab_newgateway(gateway):
    """ called on new raw gateway creation. """


@hookspec
def replenlab_workernodedown(node, error):
    """ worker node is down. """


@hookspec(firstresult=True)
def replenlab_make_solver(problem):
    """ return the selection solver callable for ``problem``. """


@hookspec(firstresult=True)
def replenlab_make_method(name, context):
    """ return the evaluation method object named ``name``. """


@hookspec
def replenlab_stage_start(stage):
    """ a pipeline stage is about to run. """


@hookspec
def replenlab_stage_finished(stage, artifacts):
    """ a pipeline stage wrote ``artifacts`` (list of paths). """
