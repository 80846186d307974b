"""Dependency-aware task pool with work stealing.

Tasks declare the flat mesh locations they read (`in_locs`) and write
(`out_locs`).  Submission wires ordering edges the way OpenMP's depend
clauses do: a task orders after the still-incomplete previous writer of every
location it touches, and a writer additionally orders after every
still-incomplete task that read its output location since it was last
written.  Completed predecessors contribute no edge, so one tracker can
persist across sweeps separated by taskwait without serialising them.

Ready tasks live in per-worker deques: owners push and pop the newest entry,
idle workers steal the oldest entry from a randomly chosen victim.  One
producer submits; workers only consume, steal, and spawn dependency-free
tasks (fork-join children, per-cell tasks).  A `parallel_for` with static or
dynamic(chunk) schedules rounds out the surface.

Concurrency design.  Per-cell task graphs put tens of thousands of
submissions and completions through this pool per sweep, so the hot paths
take no locks at all; they lean on the interpreter lock's sequential
consistency and on the atomicity of deque/list operations:

* readiness is a countdown: a task with p predecessors carries a list of
  p-1 slots, every predecessor-completion pops one, and whoever hits the
  empty list (IndexError) owns the right to enqueue the task;
* successor handoff is a drain: completion flips `done` and then drains the
  task's successor deque, while a submitter that wires an edge re-checks
  `done` after appending and drains itself if it lost the race — each
  entry is popleft'ed exactly once, by exactly one side;
* progress accounting is two token deques (created/completed) whose lengths
  are compared, never mutated counters.

The condition variable exists only to park idle workers and waiting callers.
Memory effects of a predecessor's action are therefore visible to its
successors through the same interpreter-level ordering that makes the
handoffs atomic.
"""

from __future__ import annotations

import itertools
import random
import threading
from collections import deque
from dataclasses import dataclass
from time import monotonic

from .trace import TraceLog, merge_logs

_READER_PRUNE_LEN = 64


class StallError(RuntimeError):
    """Tasks remain but nothing is ready and nothing is running."""


@dataclass(frozen=True)
class Schedule:
    """Loop schedule for parallel_for: contiguous static split or dynamic chunks."""

    mode: str = "static"
    chunk: int = 1

    def __post_init__(self):
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"schedule mode must be 'static' or 'dynamic', got {self.mode!r}")
        if self.chunk < 1:
            raise ValueError("schedule chunk must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        if text == "static":
            return cls("static")
        if text.startswith("dynamic"):
            _, _, rest = text.partition(":")
            return cls("dynamic", int(rest) if rest else 1)
        raise ValueError(f"cannot parse schedule {text!r}")

    def describe(self) -> str:
        return "static" if self.mode == "static" else f"dynamic:{self.chunk}"


STATIC = Schedule("static")


class TaskRecord:
    """One unit of work plus its dependence bookkeeping.

    `unmet` is the predecessor count fixed at submission time (the static
    view used by the graph analyses); the live countdown happens on `_slots`.
    """

    __slots__ = ("id", "action", "in_locs", "out_locs", "unmet", "successors",
                 "done", "scope", "_slots")

    def __init__(self, tid: int, action=None, in_locs=(), out_locs=()):
        self.id = tid
        self.action = action          # callable(ctx, task) or None
        self.in_locs = in_locs
        self.out_locs = out_locs
        self.unmet = 0
        self.successors = None        # deque[TaskRecord], allocated on demand
        self.done = False
        self.scope = None
        self._slots = None

    def __repr__(self):
        return f"TaskRecord(id={self.id}, unmet={self.unmet}, done={self.done})"


def make_task(tid: int, in_locs=(), out_locs=(), action=None) -> TaskRecord:
    return TaskRecord(tid, action, in_locs, out_locs)


class DependencyTracker:
    """Per-location last-writer / readers-since-write state.

    Driven by a single submitting thread; the completion flags it reads may
    flip concurrently, which is harmless — a missed completion only creates
    an edge that drains immediately.
    """

    __slots__ = ("_writer", "_readers")

    def __init__(self):
        self._writer = {}       # loc -> TaskRecord
        self._readers = {}      # loc -> list[TaskRecord]

    def submit(self, task: TaskRecord) -> list:
        """Wire `task` behind its incomplete predecessors; return them.

        Sets task.unmet and the readiness countdown, and appends the task to
        each predecessor's successor deque.  The caller decides what to do
        about predecessors that completed while we were wiring.
        """
        preds = {}
        for loc in task.in_locs:
            w = self._writer.get(loc)
            if w is not None and not w.done:
                preds[w.id] = w
        for loc in task.out_locs:
            w = self._writer.get(loc)
            if w is not None and not w.done:
                preds[w.id] = w
            rs = self._readers.get(loc)
            if rs:
                for r in rs:
                    if not r.done:
                        preds[r.id] = r
        for loc in task.out_locs:
            self._writer[loc] = task
            self._readers.pop(loc, None)
        for loc in task.in_locs:
            rs = self._readers.get(loc)
            if rs is None:
                self._readers[loc] = [task]
            else:
                rs.append(task)
                if len(rs) > _READER_PRUNE_LEN:
                    # completed readers never edge again; keep lists bounded
                    # on locations that are read every sweep but never written
                    live = [r for r in rs if not r.done]
                    rs.clear()
                    rs.extend(live)
        if not preds:
            return _NO_PREDS
        plist = list(preds.values())
        task.unmet = len(plist)
        # countdown: p-1 slots, the pop that finds the list empty enqueues
        task._slots = [None] * (len(plist) - 1)
        for p in plist:
            if p.successors is None:
                p.successors = deque((task,))
            else:
                p.successors.append(task)
        return plist

    def submit_edges(self, task: TaskRecord) -> set:
        """submit(), returning the added dependence edges (pred_id, task_id)."""
        return {(p.id, task.id) for p in self.submit(task)}


_NO_PREDS = []


def oracle_edges(submission) -> set:
    """Brute-force reference for the dependence edge set.

    A separate, direct dictionary walk over the submission order (no
    completion states: the equivalence checks submit without executing).
    Intended for small meshes; validates DependencyTracker.
    """
    writer = {}
    readers = {}
    edges = set()
    for t in submission:
        preds = set()
        for loc in t.in_locs:
            if loc in writer:
                preds.add(writer[loc])
        for loc in t.out_locs:
            if loc in writer:
                preds.add(writer[loc])
            preds.update(readers.get(loc, ()))
        for loc in t.out_locs:
            writer[loc] = t.id
            readers[loc] = set()
        for loc in t.in_locs:
            readers.setdefault(loc, set()).add(t.id)
        edges.update((p, t.id) for p in preds)
    return edges


class WaitScope:
    """Join counter for a specific set of spawned tasks (fork-join waits)."""

    __slots__ = ("count", "_done")

    def __init__(self):
        self.count = 0
        self._done = deque()

    @property
    def pending(self) -> int:
        return self.count - len(self._done)

    def drained(self) -> bool:
        return len(self._done) == self.count


class WorkerCtx:
    """Per-worker execution context handed to task actions."""

    __slots__ = ("wid", "pool", "log")

    def __init__(self, wid, pool):
        self.wid = wid
        self.pool = pool
        self.log = None


class WorkerPool:
    """T workers, per-worker ready deques, stealing, and dependence tracking.

    One pool is created per benchmark point and reused across sweeps; workers
    park on the condition variable when idle and are woken by pushes.
    Submission and taskwait belong to a single producer thread; actions
    running on workers may spawn dependency-free tasks freely.
    """

    _IDLE_WAIT = 0.05
    _JOIN_WAIT = 0.001

    def __init__(self, workers: int, steal_seed=None, stall_timeout: float = 10.0):
        if workers < 1:
            raise ValueError("worker count must be >= 1")
        self.size = workers
        self.tracker = DependencyTracker()
        self.stall_timeout = stall_timeout
        self._cv = threading.Condition(threading.Lock())
        self._deques = [deque() for _ in range(workers)]
        self._pinned = [deque() for _ in range(workers)]
        self._ctxs = [WorkerCtx(w, self) for w in range(workers)]
        self._busy = [False] * workers
        self._steal_rng = [
            random.Random(None if steal_seed is None else steal_seed + w)
            for w in range(workers)
        ]
        self._tls = threading.local()
        self._ids = itertools.count()
        self._created = deque()      # one token per task ever handed in
        self._completed = deque()    # one token per task finished
        self._idlers = 0
        self._progress = monotonic()
        self._failure = None
        self._shutdown = False
        self._logs = None
        self._edge_log = None
        self._rr = 0
        self._threads = [
            threading.Thread(target=self._worker_loop, args=(w,), daemon=True,
                             name=f"sweep-worker-{w}")
            for w in range(workers)
        ]
        for t in self._threads:
            t.start()

    # -- lifecycle -----------------------------------------------------------

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()

    def shutdown(self):
        with self._cv:
            self._shutdown = True
            self._cv.notify_all()
        for t in self._threads:
            t.join()

    @property
    def pending(self) -> int:
        return len(self._created) - len(self._completed)

    # -- submission ----------------------------------------------------------

    def submit(self, action, in_locs=(), out_locs=()) -> TaskRecord:
        """Submit one dependency-tracked task; it may start before we return."""
        task = TaskRecord(next(self._ids), action, in_locs, out_locs)
        self._created.append(None)
        preds = self.tracker.submit(task)
        if self._edge_log is not None and preds:
            self._edge_log.update((p.id, task.id) for p in preds)
        if not preds:
            self._push_ready(task)
        else:
            for p in preds:
                if p.done:
                    # p completed while we wired: it may have drained before
                    # our append landed, so settle its successors ourselves
                    self._drain_successors(p, None)
        return task

    def submit_batch(self, items) -> list:
        """Submit (action, in_locs, out_locs) triples in order; returns tasks."""
        tasks = []
        ids = self._ids
        created = self._created
        tsubmit = self.tracker.submit
        log = self._edge_log
        for action, ins, outs in items:
            task = TaskRecord(next(ids), action, ins, outs)
            created.append(None)
            preds = tsubmit(task)
            if log is not None and preds:
                log.update((p.id, task.id) for p in preds)
            if not preds:
                self._push_ready(task)
            else:
                for p in preds:
                    if p.done:
                        self._drain_successors(p, None)
            tasks.append(task)
        return tasks

    def spawn(self, action, scope: WaitScope = None, worker=None, pinned=False) -> TaskRecord:
        """Submit a dependency-free task (always immediately ready)."""
        task = TaskRecord(next(self._ids), action)
        if scope is not None:
            task.scope = scope
            scope.count += 1
        self._created.append(None)
        self._push_ready(task, worker=worker, pinned=pinned)
        return task

    def _push_ready(self, task, worker=None, pinned=False):
        if worker is None:
            worker = getattr(self._tls, "wid", None)
            if worker is None:    # main thread: deal out round-robin
                worker = self._rr % self.size
                self._rr += 1
        (self._pinned if pinned else self._deques)[worker].append(task)
        if self._idlers:
            with self._cv:
                self._cv.notify_all()

    # -- edge recording --------------------------------------------------------

    def record_edges(self, enable: bool = True):
        self._edge_log = set() if enable else None

    @property
    def edges(self) -> set:
        return set(self._edge_log) if self._edge_log is not None else set()

    # -- tracing ---------------------------------------------------------------

    def start_trace(self, capacity_hint: int = 1024):
        self._logs = [TraceLog(w, capacity_hint) for w in range(self.size)]
        for ctx, log in zip(self._ctxs, self._logs):
            ctx.log = log

    def stop_trace(self):
        logs, self._logs = self._logs, None
        for ctx in self._ctxs:
            ctx.log = None
        return merge_logs(logs) if logs is not None else None

    @property
    def tracing(self) -> bool:
        return self._logs is not None

    # -- waiting ---------------------------------------------------------------

    def taskwait(self):
        """Block until every task submitted so far has completed.

        Producer-thread only.  On return the pool is quiescent, so the token
        ledgers are reset to keep them bounded across sweeps.
        """
        deadline_check = monotonic()
        while True:
            if self._failure is not None:
                raise self._failure
            if len(self._completed) == len(self._created):
                self._completed.clear()
                self._created.clear()
                return
            with self._cv:
                if (self._failure is None
                        and len(self._completed) != len(self._created)):
                    self._cv.wait(self._JOIN_WAIT)
            now = monotonic()
            if now - deadline_check > 1.0:
                deadline_check = now
                with self._cv:
                    self._check_stall_locked()

    def wait_scope(self, scope: WaitScope):
        """Block (non-worker thread) until the scope's tasks have completed."""
        while True:
            if self._failure is not None:
                raise self._failure
            if scope.drained():
                return
            with self._cv:
                if self._failure is None and not scope.drained():
                    self._cv.wait(self._JOIN_WAIT)

    def help_until(self, ctx: WorkerCtx, scope: WaitScope):
        """Worker-side scoped wait: run other ready tasks until the scope drains.

        This is what keeps fork-join trees deadlock-free on a fixed pool — a
        parent blocked on its children executes them (or anything else ready)
        instead of occupying its worker idly.
        """
        while True:
            if self._failure is not None:
                raise self._failure
            if scope.drained():
                return
            task = self._next_task(ctx.wid)
            if task is not None:
                self._execute(task, ctx)
            else:
                with self._cv:
                    if self._failure is None and not scope.drained():
                        self._idlers += 1
                        self._cv.wait(self._JOIN_WAIT)
                        self._idlers -= 1

    # -- parallel_for ------------------------------------------------------------

    def parallel_for(self, count: int, span_body, schedule: Schedule = STATIC):
        """Run span_body(lo, hi, ctx) over [0, count) with the given schedule.

        static: T contiguous spans whose sizes differ by at most one (earlier
        spans larger), span i executed by worker i.  dynamic: spans of
        schedule.chunk items claimed atomically, in order, by idle workers.
        Returns when every item has been processed.
        """
        if count <= 0:
            return
        scope = WaitScope()
        if schedule.mode == "static":
            base, rem = divmod(count, self.size)
            lo = 0
            for w in range(self.size):
                hi = lo + base + (1 if w < rem else 0)
                if hi > lo:
                    self.spawn(_static_span(span_body, lo, hi), scope=scope,
                               worker=w, pinned=True)
                lo = hi
        else:
            claim_lock = threading.Lock()
            cursor = [0]
            chunk = schedule.chunk

            def driver(ctx, task):
                while True:
                    with claim_lock:
                        lo = cursor[0]
                        if lo >= count:
                            return
                        cursor[0] = lo + chunk
                    span_body(lo, min(lo + chunk, count), ctx)

            for w in range(self.size):
                self.spawn(driver, scope=scope, worker=w, pinned=True)
        self.wait_scope(scope)

    # -- worker internals ----------------------------------------------------------

    def _worker_loop(self, wid: int):
        self._tls.wid = wid
        ctx = self._ctxs[wid]
        while True:
            task = self._next_task(wid)
            if task is not None:
                self._execute(task, ctx)
                continue
            with self._cv:
                if self._shutdown:
                    return
                self._idlers += 1
                self._cv.wait(self._IDLE_WAIT)
                self._idlers -= 1
                self._check_stall_locked()

    def _next_task(self, wid: int):
        try:
            return self._pinned[wid].popleft()
        except IndexError:
            pass
        try:
            return self._deques[wid].pop()
        except IndexError:
            pass
        # steal the oldest entry from a random victim
        rng = self._steal_rng[wid]
        start = rng.randrange(self.size)
        for i in range(self.size):
            victim = (start + i) % self.size
            if victim == wid:
                continue
            try:
                return self._deques[victim].popleft()
            except IndexError:
                continue
        return None

    def _execute(self, task: TaskRecord, ctx: WorkerCtx):
        self._busy[ctx.wid] = True
        try:
            if task.action is not None:
                task.action(ctx, task)
        except BaseException as exc:
            with self._cv:
                if self._failure is None:
                    self._failure = exc
                self._cv.notify_all()
        finally:
            self._busy[ctx.wid] = False
        task.done = True
        if task.successors is not None:
            self._drain_successors(task, ctx.wid)
        scope = task.scope
        if scope is not None:
            scope._done.append(None)
            if len(scope._done) == scope.count:
                with self._cv:
                    self._cv.notify_all()
        self._completed.append(None)
        self._progress = monotonic()
        if len(self._completed) == len(self._created):
            with self._cv:
                self._cv.notify_all()

    def _drain_successors(self, task: TaskRecord, wid):
        """Settle every queued successor of a completed task exactly once.

        Both completion and a racing submitter may call this; deque.popleft
        hands each entry to a single caller, and the popped countdown slot
        decides readiness.
        """
        succ = task.successors
        woke = None
        while True:
            try:
                s = succ.popleft()
            except IndexError:
                break
            try:
                s._slots.pop()
            except IndexError:
                if wid is None:
                    self._push_ready(s)
                else:
                    self._deques[wid].append(s)
                    woke = True
        if woke and self._idlers:
            with self._cv:
                self._cv.notify_all()

    def _check_stall_locked(self):
        if (self._failure is None
                and self.pending > 0
                and monotonic() - self._progress > self.stall_timeout
                and not any(self._busy)
                and not any(self._deques)
                and not any(self._pinned)):
            self._failure = StallError(
                f"{self.pending} task(s) pending but none ready or running "
                f"for {self.stall_timeout:.1f}s")
            self._cv.notify_all()


def _static_span(span_body, lo, hi):
    def run(ctx, task):
        span_body(lo, hi, ctx)
    return run
