from queue import Empty, Queue

import py

from replenlab.errors import ReplenlabError, WorkerCrashed
from replenlab.plugin import get_plugin_manager
from replenlab.sim_core import simconfig_payload, sku_payload
from replenlab.workermanage import NodeManager


class DistSession:
    """Evaluate simulation cells on local execnet worker processes.

    A NodeManager starts ``numprocesses`` popen workers that post their
    events onto ``self.queue``; ``run()`` processes them with the
    ``worker_*`` methods until every cell result arrived.  Results come back
    in cell order whatever the scheduling was.
    """

    def __init__(
        self,
        panel,
        values,
        cfg,
        history=None,
        numprocesses=1,
        pluginmanager=None,
        maxworkerrestart=None,
        debug=False,
    ):
        self.pluginmanager = pluginmanager or get_plugin_manager()
        self.hook = self.pluginmanager.hook
        self.log = py.log.Producer("replenlab").dist
        self.numprocesses = int(numprocesses)
        self.payload = {
            "skus": [sku_payload(sku) for sku in panel.skus],
            "demand": panel.demand.tolist(),
            "history": None if history is None else [list(map(int, h)) for h in history],
            "values": [int(v) for v in values],
            "cfg": simconfig_payload(cfg),
        }
        self.debug = debug
        self.queue = Queue()
        self.nodemanager = None
        self.sched = None
        self.shuttingdown = False
        self.results = []
        self._active_nodes = set()
        self._failed_nodes_count = 0
        if maxworkerrestart is None:
            maxworkerrestart = self.numprocesses * 4
        self._max_worker_restart = int(maxworkerrestart)
        self._error = None

    @property
    def session_finished(self):
        return bool(self.shuttingdown and not self._active_nodes)

    def run(self, cells):
        """Return the ``(stock_cents, lost_cents, sold_units)`` of every cell."""
        self.payload["cells"] = [list(cell) for cell in cells]
        self.results = [None] * len(cells)
        self.sched = self.hook.replenlab_make_scheduler(
            cells=list(range(len(cells))), numnodes=self.numprocesses, log=self.log
        )
        assert self.sched is not None
        self.nodemanager = NodeManager(self.pluginmanager, self.numprocesses, debug=self.debug)
        try:
            nodes = self.nodemanager.setup_nodes(self.queue.put, self.payload)
            self._active_nodes.update(nodes)
            while not self.session_finished:
                self.loop_once()
        finally:
            self.nodemanager.teardown_nodes()
        if self._error is not None:
            raise self._error
        missing = [i for i, r in enumerate(self.results) if r is None]
        if missing:
            raise WorkerCrashed("{} simulation cells were never evaluated".format(len(missing)))
        return [tuple(r) for r in self.results]

    def loop_once(self):
        """Process one event from one of the workers."""
        while 1:
            if not self._active_nodes:
                self.triggershutdown()
                raise WorkerCrashed("Unexpectedly no active workers available")
            try:
                eventcall = self.queue.get(timeout=2.0)
                break
            except Empty:
                continue
        callname, kwargs = eventcall
        method = "worker_" + callname
        call = getattr(self, method)
        self.log("calling method", method, kwargs)
        call(**kwargs)
        if self.sched.cells_finished:
            self.triggershutdown()

    #
    # callbacks for processing events from workers
    #

    def worker_workerready(self, node, workerinfo):
        node.workerinfo = workerinfo
        node.workerinfo["id"] = node.gateway.id
        if self.shuttingdown:
            node.shutdown()
            return
        self.sched.add_node(node)
        if self.sched.nodes_ready:
            self.sched.schedule()

    def worker_cellresult(self, node, index, result, duration):
        self.results[index] = result
        self.sched.mark_cell_complete(node, index, duration)

    def worker_workerfinished(self, node):
        self.hook.replenlab_workernodedown(node=node, error=None)
        if node in self.sched.nodes:
            requeued = self.sched.remove_node(node)
            assert not requeued, (requeued, node)
        self._active_nodes.discard(node)

    def worker_internal_error(self, node, formatted_error):
        for line in formatted_error.splitlines():
            self.log("IERROR>", line)
        self._error = ReplenlabError(
            "worker {} failed:\n{}".format(node.gateway.id, formatted_error)
        )
        self._active_nodes.discard(node)
        if node in self.sched.nodes:
            self.sched.remove_node(node)
        self.triggershutdown()

    def worker_errordown(self, node, error):
        """Emitted by the WorkerController when a node dies."""
        self.hook.replenlab_workernodedown(node=node, error=error)
        if node in self.sched.nodes:
            self.sched.remove_node(node)
        self._failed_nodes_count += 1
        if self._failed_nodes_count > self._max_worker_restart:
            if self._max_worker_restart == 0:
                msg = "worker {} crashed and worker restarting disabled".format(node.gateway.id)
            else:
                msg = "maximum crashed workers reached: %d" % self._max_worker_restart
            self._error = WorkerCrashed(msg)
            self.triggershutdown()
        elif not self.shuttingdown:
            self.log("replacing crashed worker", node.gateway.id)
            self._clone_node(node)
        self._active_nodes.discard(node)

    def _clone_node(self, node):
        node = self.nodemanager.respawn(node, self.queue.put, self.payload)
        self._active_nodes.add(node)
        return node

    def triggershutdown(self):
        self.log("triggering shutdown")
        self.shuttingdown = True
        for node in list(self._active_nodes):
            node.shutdown()
