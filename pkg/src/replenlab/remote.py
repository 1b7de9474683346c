"""
    This module is executed in worker subprocesses through execnet.  It
    rebuilds the panel it was sent, evaluates the simulation cells the
    controller assigns and relays the results back.
"""
import os
import sys
import time
import traceback

import py


class WorkerInteractor:
    def __init__(self, workerinput, payload, channel):
        from replenlab.datagen import SkuRecord
        from replenlab.sim_core import SimConfig

        self.workerid = workerinput.get("workerid", "?")
        self.log = py.log.Producer("worker-%s" % self.workerid)
        if not workerinput.get("debug"):
            py.log.setconsumer(self.log._keywords, None)
        self.channel = channel
        self.skus = [SkuRecord(**sku) for sku in payload["skus"]]
        self.demand = payload["demand"]
        self.history = payload.get("history")
        self.values = payload["values"]
        self.cells = payload["cells"]
        self.cfg = SimConfig(**payload["cfg"])

    def sendevent(self, name, **kwargs):
        self.log("sending", name, kwargs)
        self.channel.send((name, kwargs))

    def evaluate(self, cell_index):
        from replenlab.sim_core import evaluate_cell

        i, j = self.cells[cell_index]
        history = None if self.history is None else self.history[i]
        return evaluate_cell(self.demand[i], self.skus[i], self.values[j], self.cfg, history)

    def mainloop(self):
        self.sendevent("workerready", workerinfo=getinfodict())
        self.log("entering main loop")
        while 1:
            try:
                name, kwargs = self.channel.receive()
            except EOFError:
                return
            self.log("received command", name, kwargs)
            if name == "runcells":
                for index in kwargs["indices"]:
                    start = time.time()
                    try:
                        result = self.evaluate(index)
                    except Exception:
                        self.sendevent("internal_error", formatted_error=traceback.format_exc())
                        return
                    self.sendevent(
                        "cellresult",
                        index=index,
                        result=list(result),
                        duration=time.time() - start,
                    )
            elif name == "shutdown":
                self.sendevent("workerfinished")
                return


def getinfodict():
    import platform

    return dict(
        version=sys.version,
        version_info=tuple(sys.version_info),
        sysplatform=sys.platform,
        platform=platform.platform(),
        executable=sys.executable,
        cwd=os.getcwd(),
    )


if __name__ == "__channelexec__":
    channel = channel  # noqa
    workerinput, payload = channel.receive()
    os.environ["REPLENLAB_WORKER"] = workerinput["workerid"]
    interactor = WorkerInteractor(workerinput, payload, channel)
    interactor.mainloop()
