"""
Controller side of the simulation workers.

A NodeManager owns the execnet group of popen gateways.  Each gateway gets
a WorkerController that ships the simulation payload once and turns what
the worker sends back into ``(eventname, kwargs)`` tuples on the session
queue.
"""
import execnet
import py

import replenlab.remote

#: events a worker may send; anything else takes the node down
WORKER_EVENTS = ("workerready", "cellresult", "internal_error", "workerfinished")


class NodeManager:
    EXIT_TIMEOUT = 10

    def __init__(self, pluginmanager, numprocesses, debug=False):
        self.hook = pluginmanager.hook
        self.debug = debug
        self.log = py.log.Producer("replenlab").nodemanager
        self.group = execnet.Group()
        self.specs = [self._new_spec() for _ in range(int(numprocesses))]

    def _new_spec(self):
        spec = execnet.XSpec("popen")
        self.group.allocate_id(spec)
        return spec

    def setup_nodes(self, putevent, payload):
        self.hook.replenlab_setupnodes(specs=self.specs)
        self.log("starting", len(self.specs), "workers")
        return [self.setup_node(spec, putevent, payload) for spec in self.specs]

    def setup_node(self, spec, putevent, payload):
        gw = self.group.makegateway(spec)
        self.hook.replenlab_newgateway(gateway=gw)
        node = WorkerController(gw, payload, putevent, debug=self.debug)
        # the gateway holds the only long-lived reference to its controller
        gw.node = node
        node.setup()
        self.log("started", node)
        return node

    def respawn(self, node, putevent, payload):
        """Start a fresh worker in place of the crashed ``node``."""
        self.log("respawning", node)
        return self.setup_node(self._new_spec(), putevent, payload)

    def teardown_nodes(self):
        self.group.terminate(self.EXIT_TIMEOUT)


class WorkerController:
    ENDMARK = -1

    def __init__(self, gateway, payload, putevent, debug=False):
        self.gateway = gateway
        self.payload = payload
        self.putevent = putevent
        self.debug = debug
        self.workerinfo = None
        self.cells_sent = 0
        self._down = False
        self._shutdown_sent = False
        self.log = py.log.Producer(("replenlab", "workerctl", gateway.id))

    def __repr__(self):
        return "<WorkerController {} cells_sent={}>".format(self.gateway.id, self.cells_sent)

    @property
    def shutting_down(self):
        return self._down or self._shutdown_sent

    def setup(self):
        self.channel = self.gateway.remote_exec(replenlab.remote)
        self.channel.send(({"workerid": self.gateway.id, "debug": self.debug}, self.payload))
        if self.putevent:
            self.channel.setcallback(self.process_from_remote, endmarker=self.ENDMARK)

    def send_cells(self, indices):
        indices = list(indices)
        self.cells_sent += len(indices)
        self._send("runcells", indices=indices)

    def shutdown(self):
        if self._down or self._shutdown_sent:
            return
        try:
            self._send("shutdown")
        except OSError:
            # channel already gone; errordown follows from the endmarker
            pass
        self._shutdown_sent = True

    def _send(self, name, **kwargs):
        self.log("->", name, kwargs)
        self.channel.send((name, kwargs))

    def _post(self, eventname, **kwargs):
        self.putevent((eventname, dict(kwargs, node=self)))

    def process_from_remote(self, eventcall):
        """Channel callback; runs in the execnet receiver thread and only queues events."""
        try:
            if eventcall == self.ENDMARK:
                if not self._down:
                    self._down = True
                    err = self.channel._getremoteerror()
                    if not err or isinstance(err, EOFError):
                        err = "worker exited without finishing"
                    self._post("errordown", error=err)
                return
            eventname, kwargs = eventcall
            if eventname not in WORKER_EVENTS:
                raise ValueError("unknown worker event {!r}".format(eventname))
            if eventname == "workerfinished":
                self._down = True
            self._post(eventname, **kwargs)
        except KeyboardInterrupt:
            raise
        except Exception as e:  # noqa
            self.shutdown()
            self._post("errordown", error=e)
