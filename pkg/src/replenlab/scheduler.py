from itertools import cycle

from py.log import Producer


class LoadScheduling:
    """Implement load scheduling of simulation cells across nodes.

    Every cell is evaluated exactly once.  Once ``numnodes`` nodes have
    reported ready, ``.schedule()`` sends an initial batch round robin.
    Whenever a node returns a cell result, ``.mark_cell_complete()`` refills
    the node if its pending list fell below a low watermark.

    Attributes:

    :numnodes: The expected number of nodes taking part.  Nodes are added
       by the DistSession when they come up and removed on shutdown or
       crash, so the actual number varies.

    :cells: The cell indices to evaluate.

    :node2pending: Map of nodes and the cell indices sent to them and
       not yet reported back.

    :pending: Cell indices not yet allocated to any node.

    :log: A py.log.Producer instance.
    """

    def __init__(self, cells, numnodes, log=None):
        self.numnodes = numnodes
        self.cells = list(cells)
        self.node2pending = {}
        self.pending = []
        self.scheduled = False
        if log is None:
            self.log = Producer("loadsched")
        else:
            self.log = log.loadsched

    @property
    def nodes(self):
        """A list of all nodes in the scheduler."""
        return list(self.node2pending.keys())

    @property
    def nodes_ready(self):
        return len(self.node2pending) >= self.numnodes

    @property
    def cells_finished(self):
        """Return True if every cell has been reported back."""
        if not self.scheduled:
            return False
        if self.pending:
            return False
        return not any(self.node2pending.values())

    @property
    def has_pending(self):
        if self.pending:
            return True
        return any(self.node2pending.values())

    def add_node(self, node):
        assert node not in self.node2pending
        self.node2pending[node] = []

    def mark_cell_complete(self, node, cell_index, duration=0):
        """Mark a cell as evaluated by ``node`` and maybe send it more."""
        self.node2pending[node].remove(cell_index)
        self.check_schedule(node, duration=duration)

    def check_schedule(self, node, duration=0):
        """Maybe schedule new cells on the node.

        ``duration`` of the last cell is a hint: a node busy with slow cells
        that still holds two or more is left alone.
        """
        if node.shutting_down:
            return

        if self.pending:
            num_nodes = len(self.node2pending)
            cells_per_node_min = max(2, len(self.pending) // num_nodes // 4)
            cells_per_node_max = max(2, len(self.pending) // num_nodes // 2)
            node_pending = self.node2pending[node]
            if len(node_pending) < cells_per_node_min:
                if duration >= 0.1 and len(node_pending) >= 2:
                    return
                self._send_cells(node, cells_per_node_max - len(node_pending))

        self.log("num cells waiting for node:", len(self.pending))

    def remove_node(self, node):
        """Remove a node, re-queueing any cells it still held.

        Returns the re-queued cell indices (empty after a clean shutdown).
        """
        pending = self.node2pending.pop(node)
        if not pending:
            return []
        self.pending[:0] = pending
        for other in self.node2pending:
            self.check_schedule(other)
        return pending

    def schedule(self):
        """Initiate distribution of the cells.

        Called again after a replacement node joined, this behaves like
        ``.check_schedule()`` on every node.
        """
        assert self.nodes_ready

        if self.scheduled:
            for node in self.nodes:
                self.check_schedule(node)
            return

        self.scheduled = True
        self.pending[:] = self.cells
        if not self.pending:
            return

        initial_batch = max(len(self.pending) // 4, 2 * len(self.nodes))
        nodes = cycle(self.nodes)
        for _ in range(initial_batch):
            self._send_cells(next(nodes), 1)

    def _send_cells(self, node, num):
        cells_per_node = self.pending[:num]
        if cells_per_node:
            del self.pending[:num]
            self.node2pending[node].extend(cells_per_node)
            node.send_cells(cells_per_node)
