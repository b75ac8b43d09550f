"""Classes to evaluate experiment Graphs in various ways."""
import logging
import pickle
import time
from concurrent import futures

from ..errors import PipelineProcessError

log = logging.getLogger(__name__)


class Evaluator:
    """An engine to evaluate a Graph."""

    def _nodes_to_evaluate(self, graph, skip_clean):
        """Get the nodes to evaluate, in order."""
        nodes = graph.evaluation_sequence
        if skip_clean:
            nodes = [n for n in nodes if n.is_dirty]
        return nodes

    def _evaluate_nodes(self, nodes):
        """Perform the actual node evaluation."""
        raise NotImplementedError  # pragma: no cover

    def evaluate(self, graph, skip_clean=False):
        """Evaluate the graph.

        Args:
            graph (Graph): The graph to evaluate.
            skip_clean (bool): Whether to skip nodes that are clean.
        """
        self._evaluate_nodes(self._nodes_to_evaluate(graph, skip_clean))


class LinearEvaluator(Evaluator):
    """Evaluate the graph linearly in a single thread."""

    def _evaluate_nodes(self, nodes):
        for node in nodes:
            node.evaluate()


class _ParallelEvaluator(Evaluator):
    """Submit every node as soon as none of its upstream nodes is pending."""

    def __init__(self, max_workers=None):
        """Initialize with how many workers to use.

        Args:
            max_workers (int): The number of workers to use in parallel,
                defaults to the executor's default.
        """
        self.max_workers = max_workers

    def _executor(self):
        raise NotImplementedError  # pragma: no cover

    def _submit(self, executor, node):
        raise NotImplementedError  # pragma: no cover

    def _collect(self, node, future):
        raise NotImplementedError  # pragma: no cover

    def _evaluate_nodes(self, nodes):
        pending = list(nodes)
        running = {}
        with self._executor() as executor:
            while pending or running:
                log.debug(
                    "Iterating submission with %s nodes to evaluate and %s "
                    "running",
                    len(pending),
                    len(running),
                )
                not_submitted = []
                for node in pending:
                    blocked = set(node.upstream_nodes) & (
                        set(pending) | set(running.values())
                    )
                    if blocked:
                        not_submitted.append(node)
                    else:
                        running[self._submit(executor, node)] = node
                pending = not_submitted
                if pending and not running:  # pragma: no cover
                    raise RuntimeError(
                        f"Execution hit deadlock: {len(pending)} nodes left "
                        "to evaluate, but no nodes running."
                    )
                done, _ = futures.wait(
                    list(running), return_when=futures.FIRST_COMPLETED
                )
                for future in done:
                    self._collect(running.pop(future), future)


class ThreadedEvaluator(_ParallelEvaluator):
    """Evaluate each node in a separate thread."""

    def _executor(self):
        return futures.ThreadPoolExecutor(max_workers=self.max_workers)

    def _submit(self, executor, node):
        return executor.submit(node.evaluate)

    def _collect(self, node, future):
        future.result()


def _compute_in_process(func, inputs):
    """Run a node function in a worker and time it."""
    start_time = time.time()
    outputs = func(**inputs) or {}
    return outputs, start_time, time.time() - start_time


class ProcessPoolEvaluator(_ParallelEvaluator):
    """Evaluate nodes in worker processes.

    Only the node function and its input values travel to the worker; the
    outputs are applied to the node in the parent process, where all events
    are emitted. Nodes without a process payload (see
    ``INode.process_payload``) are evaluated in the parent process.
    """

    def _executor(self):
        return futures.ProcessPoolExecutor(max_workers=self.max_workers)

    def _submit(self, executor, node):
        try:
            func, _ = node.process_payload()
        except TypeError:
            func = None
        if func is None or node.omit:
            node.evaluate()
            finished = futures.Future()
            finished.set_result(None)
            return finished
        try:
            pickle.dumps(func)
        except (AttributeError, TypeError, pickle.PicklingError) as exc:
            raise PipelineProcessError(
                f"Node '{node.name}' can not be sent to a worker process: "
                f"{exc}"
            ) from exc
        inputs = node.begin_evaluation()
        log.debug("Submitting %s to a worker process", node.name)
        return executor.submit(_compute_in_process, func, inputs)

    def _collect(self, node, future):
        try:
            result = future.result()
        except Exception:
            node.events["evaluation-exception"].emit(node)
            raise
        if result is not None:
            node.finish_evaluation(*result)
