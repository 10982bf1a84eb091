"""Parsing, binding and sandboxed execution of candidate heuristic programs.

Candidates are plain Python source. Before anything runs, the source is
parsed and statically checked; execution then happens with a whitelisted set
of builtins and importable modules, usually inside a forked child process
with wall-time and address-space limits. Nothing in the restricted namespace
gives access to files, the network, clocks or random state, so a program's
output is a pure function of its arguments.

The restriction layer is defence in depth for cooperative code produced by a
model, not a hardened security boundary; the process limits are what keep a
misbehaving candidate from hurting the host.
"""

from __future__ import annotations

import ast
import builtins
import collections
import functools
import heapq
import bisect
import itertools
import math
import multiprocessing
import operator
import os
import resource
import signal
import statistics
import threading
import time
import traceback
import types
import typing
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable

import numpy as np

from .domains import Domain, get_domain

OK = "ok"
PARSE_ERROR = "parse_error"
RUNTIME_ERROR = "runtime_error"
TIMEOUT = "timeout"
INFEASIBLE_OUTPUT = "infeasible_output"
STATUSES = (OK, PARSE_ERROR, RUNTIME_ERROR, TIMEOUT, INFEASIBLE_OUTPUT)

ETA_FLOOR = 1e-10


class ProgramFailure(Exception):
    """A candidate failed; ``status`` is one of the non-ok statuses."""

    def __init__(self, status: str, diagnostics: str = ""):
        super().__init__(f"{status}: {diagnostics}" if diagnostics else status)
        self.status = status
        self.diagnostics = diagnostics


class ProgramParseError(ProgramFailure):
    def __init__(self, diagnostics: str):
        super().__init__(PARSE_ERROR, diagnostics)


class InterfaceMismatchError(ProgramFailure):
    def __init__(self, diagnostics: str):
        super().__init__(PARSE_ERROR, diagnostics)


@dataclass(frozen=True)
class Limits:
    wall_time: float = 10.0  # seconds per isolated invocation
    memory_mb: int = 512
    selector_call: float = 0.05  # seconds per selector call
    isolate: bool = True


DEFAULT_LIMITS = Limits()


@dataclass
class ExecutionOutcome:
    status: str
    value: Any = None
    wall_time: float = 0.0
    diagnostics: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK

    def unwrap(self):
        if self.status != OK:
            raise ProgramFailure(self.status, self.diagnostics)
        return self.value


# -- restricted namespace ------------------------------------------------------

_SAFE_BUILTIN_NAMES = (
    "abs all any bool callable chr dict divmod enumerate filter float format frozenset int "
    "isinstance issubclass iter len list map max min next ord pow range repr reversed round "
    "set slice sorted str sum tuple zip complex bin hex oct "
    "Exception ArithmeticError AssertionError IndexError KeyError LookupError NotImplementedError "
    "OverflowError RuntimeError StopIteration TypeError ValueError ZeroDivisionError "
    "FloatingPointError"
).split()

_NUMPY_DENY = frozenset(
    "random load save savez savez_compressed savetxt loadtxt genfromtxt fromfile memmap fromregex "
    "DataSource lib ctypeslib testing f2py distutils core _core seterr seterrcall set_printoptions "
    "setbufsize show_config info".split()
)
_NUMPY_SUBMODULES = frozenset({"linalg", "fft", "emath", "polynomial"})

_MODULE_DENY = {
    "operator": frozenset({"attrgetter", "methodcaller"}),
    "typing": frozenset({"get_type_hints", "ForwardRef"}),
}

_DENIED_ATTRS = frozenset(
    "tofile dump dumps ctypes format format_map setflags flags "
    "gi_frame gi_code cr_frame cr_code ag_frame f_globals f_locals f_builtins f_back "
    "tb_frame tb_next co_code mro".split()
)


class _ModuleProxy:
    """Read-only view of a module that hides denied attributes."""

    def __init__(self, module, deny=frozenset(), submodules=frozenset()):
        object.__setattr__(self, "_mod", module)
        object.__setattr__(self, "_deny", deny)
        object.__setattr__(self, "_subs", submodules)

    def __getattr__(self, name):
        if name in self._deny or name.startswith("_"):
            raise AttributeError(f"'{self._mod.__name__}.{name}' is not available in the sandbox")
        value = getattr(self._mod, name)
        if isinstance(value, types.ModuleType):
            if name not in self._subs:
                raise AttributeError(f"module '{self._mod.__name__}.{name}' is not available in the sandbox")
            return _ModuleProxy(value, self._deny)
        return value

    def __setattr__(self, name, value):
        raise AttributeError("sandbox modules are read-only")

    def __dir__(self):
        return [n for n in dir(self._mod) if not n.startswith("_") and n not in self._deny]


def _module_table() -> dict:
    table = {"numpy": _ModuleProxy(np, _NUMPY_DENY, _NUMPY_SUBMODULES)}
    for mod in (math, itertools, functools, heapq, collections, bisect, typing, operator, statistics):
        table[mod.__name__] = _ModuleProxy(mod, _MODULE_DENY.get(mod.__name__, frozenset()))
    return table


def _restricted_import(table):
    def _import(name, globals=None, locals=None, fromlist=(), level=0):
        if level:
            raise ImportError("relative imports are not available in the sandbox")
        root, _, rest = name.partition(".")
        if root not in table:
            raise ImportError(f"module '{name}' is not available in the sandbox")
        mod = table[root]
        if not fromlist:
            # binds only the root proxy; numpy's own lazy internal imports also land here
            return mod
        for part in rest.split(".") if rest else ():
            try:
                mod = getattr(mod, part)
            except AttributeError:
                raise ImportError(f"module '{name}' is not available in the sandbox") from None
        for item in fromlist:
            try:
                getattr(mod, item)
            except AttributeError:
                raise ImportError(f"cannot import '{item}' from '{name}' in the sandbox") from None
        return mod

    return _import


def _discard_print(*args, **kwargs):
    return None


def sandbox_globals() -> dict:
    safe = {name: getattr(builtins, name) for name in _SAFE_BUILTIN_NAMES}
    safe["print"] = _discard_print
    table = _module_table()
    safe["__import__"] = _restricted_import(table)
    safe["__build_class__"] = builtins.__build_class__
    # numpy is pre-bound as np so candidates that skip the import still run
    return {"__builtins__": safe, "__name__": "candidate", "np": table["numpy"]}


# -- static checks and binding ------------------------------------------------


def _static_check(tree: ast.AST):
    for node in ast.walk(tree):
        if isinstance(node, ast.Attribute):
            if node.attr.startswith("_") or node.attr in _DENIED_ATTRS:
                raise ProgramParseError(f"line {node.lineno}: attribute '{node.attr}' is not allowed")
        elif isinstance(node, ast.ImportFrom) and node.level:
            raise ProgramParseError(f"line {node.lineno}: relative imports are not allowed")


def _find_entry(tree: ast.Module, domain: Domain) -> ast.FunctionDef:
    defs = [n for n in tree.body if isinstance(n, ast.FunctionDef)]
    found = [n for n in defs if n.name == domain.entry_name]
    if not found:
        names = ", ".join(n.name for n in defs) or "none"
        raise InterfaceMismatchError(
            f"expected a top-level function '{domain.entry_name}', found: {names}")
    fn = found[-1]
    a = fn.args
    names = tuple(arg.arg for arg in a.posonlyargs + a.args)
    if names != domain.params or a.vararg or a.kwarg or a.kwonlyargs:
        raise InterfaceMismatchError(
            f"'{domain.entry_name}' must take exactly ({', '.join(domain.params)}), "
            f"got ({', '.join(names)})")
    return fn


@dataclass(frozen=True, eq=False)
class HeuristicProgram:
    source: str
    domain: str
    tree: ast.Module = field(repr=False)
    entry_name: str = ""
    params: tuple = ()

    def __eq__(self, other):
        if not isinstance(other, HeuristicProgram):
            return NotImplemented
        return self.source == other.source and self.domain == other.domain

    def __hash__(self):
        return hash((self.source, self.domain))

    @cached_property
    def function(self) -> Callable:
        """Execute the module body in a restricted namespace and return the entry point.

        This runs candidate code; callers are expected to be inside an
        isolated child unless they trust the source.
        """
        glb = sandbox_globals()
        code = compile(self.tree, "<candidate>", "exec")
        exec(code, glb)
        fn = glb.get(self.entry_name)
        if not callable(fn):
            raise ProgramFailure(RUNTIME_ERROR, f"'{self.entry_name}' is not callable after execution")
        return fn


def parse_program(source: str, domain: str) -> HeuristicProgram:
    dom = get_domain(domain)
    if not source or not source.strip():
        raise ProgramParseError("empty program source")
    try:
        tree = ast.parse(source, filename="<candidate>")
    except SyntaxError as exc:
        raise ProgramParseError(f"line {exc.lineno}: {exc.msg}") from None
    except ValueError as exc:  # e.g. null bytes
        raise ProgramParseError(str(exc)) from None
    _static_check(tree)
    _find_entry(tree, dom)
    return HeuristicProgram(source, domain, tree, dom.entry_name, dom.params)


# -- execution -----------------------------------------------------------------


class _SelectorTimeout(BaseException):
    pass


_timer_state = threading.local()


def _alarm(signum, frame):
    _timer_state.expired = True
    raise _SelectorTimeout()


def call_with_timeout(fn: Callable, args: tuple, seconds: float | None):
    """Call ``fn(*args)``; raise a timeout failure if it runs past ``seconds``.

    Uses an interval timer, so it only arms in the main thread. A candidate
    that swallows the timer exception is still reported as timed out.
    """
    armed = seconds is not None and seconds > 0 and threading.current_thread() is threading.main_thread()
    if not armed:
        return _call(fn, args)
    _timer_state.expired = False
    previous = signal.signal(signal.SIGALRM, _alarm)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        value = _call(fn, args)
    except _SelectorTimeout:
        raise ProgramFailure(TIMEOUT, f"call exceeded {seconds * 1000:.0f} ms") from None
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)
    if _timer_state.expired:
        raise ProgramFailure(TIMEOUT, f"call exceeded {seconds * 1000:.0f} ms")
    return value


def _call(fn, args):
    try:
        return fn(*args)
    except (ProgramFailure, _SelectorTimeout):
        raise
    except MemoryError:
        raise ProgramFailure(RUNTIME_ERROR, "memory limit exceeded") from None
    except RecursionError:
        raise ProgramFailure(RUNTIME_ERROR, "maximum recursion depth exceeded") from None
    except Exception as exc:
        raise ProgramFailure(RUNTIME_ERROR, _format_exc(exc)) from None


def _format_exc(exc: BaseException) -> str:
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if f.filename == "<candidate>"]
    where = f" (line {frames[-1].lineno})" if frames else ""
    return f"{type(exc).__name__}: {exc}{where}"


def _vm_bytes() -> int:
    try:
        with open("/proc/self/statm") as fh:
            pages = int(fh.read().split()[0])
        return pages * os.sysconf("SC_PAGE_SIZE")
    except (OSError, ValueError):
        return 0


def _child_main(conn, fn, args, memory_mb):
    try:
        if memory_mb:
            limit = _vm_bytes() + int(memory_mb) * 1024 * 1024
            try:
                resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
            except (ValueError, OSError):
                pass
        try:
            result = (OK, fn(*args))
        except ProgramFailure as exc:
            result = (exc.status, exc.diagnostics)
        except MemoryError:
            result = (RUNTIME_ERROR, "memory limit exceeded")
        except BaseException as exc:
            result = (RUNTIME_ERROR, _format_exc(exc))
        try:
            conn.send(result)
        except Exception as exc:
            conn.send((RUNTIME_ERROR, f"result could not be returned: {type(exc).__name__}"))
    finally:
        conn.close()


def run_isolated(fn: Callable, args: tuple = (), limits: Limits = DEFAULT_LIMITS) -> ExecutionOutcome:
    """Run trusted driver ``fn(*args)`` in a forked child under ``limits``.

    ``fn`` may call candidate code; any ProgramFailure it raises is reported
    through the outcome status. With ``limits.isolate`` false the call runs in
    the current process, which is faster but offers no wall-time kill.
    """
    t0 = time.perf_counter()
    if not limits.isolate:
        try:
            value = fn(*args)
        except ProgramFailure as exc:
            return ExecutionOutcome(exc.status, None, time.perf_counter() - t0, exc.diagnostics)
        return ExecutionOutcome(OK, value, time.perf_counter() - t0)

    ctx = multiprocessing.get_context("fork")
    recv, send = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_child_main, args=(send, fn, args, limits.memory_mb), daemon=True)
    proc.start()
    send.close()
    try:
        if recv.poll(limits.wall_time):
            try:
                status, payload = recv.recv()
            except (EOFError, OSError):
                status, payload = RUNTIME_ERROR, f"child exited abnormally (code {proc.exitcode})"
        else:
            status, payload = TIMEOUT, f"exceeded wall-time limit of {limits.wall_time:g} s"
    finally:
        recv.close()
        if proc.is_alive():
            proc.kill()
        proc.join()
    elapsed = time.perf_counter() - t0
    if status == OK:
        return ExecutionOutcome(OK, payload, elapsed)
    if status == RUNTIME_ERROR and proc.exitcode and proc.exitcode < 0 and not payload:
        payload = f"child killed by signal {-proc.exitcode}"
    return ExecutionOutcome(status, None, elapsed, str(payload))


def _invoke_entry(program: HeuristicProgram, args: tuple):
    return _call(program.function, args)


def sandbox_execute(program: HeuristicProgram, args: tuple, limits: Limits = DEFAULT_LIMITS) -> ExecutionOutcome:
    """Load ``program`` and call its entry point with ``args`` under ``limits``."""
    return run_isolated(_invoke_entry, (program, tuple(args)), limits)


# -- interface adapters --------------------------------------------------------


def _read_only(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _as_index(value) -> int:
    if isinstance(value, (bool, np.bool_)):
        raise ProgramFailure(INFEASIBLE_OUTPUT, f"selector returned a boolean ({value!r})")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)) and float(value).is_integer():
        return int(value)
    raise ProgramFailure(INFEASIBLE_OUTPUT, f"selector returned {type(value).__name__}, expected an int")


def invoke_selector(program: HeuristicProgram, call_context: dict, limits: Limits = DEFAULT_LIMITS) -> int:
    """Ask a constructive selector for the next node.

    ``call_context`` maps interface parameter names to values. The returned
    index must lie in the offered set (unvisited nodes for TSP, feasible
    customers or the depot for the routing domains).
    """
    dom = get_domain(program.domain)
    args = tuple(call_context[p] for p in dom.params)
    value = call_with_timeout(program.function, args, limits.selector_call)
    idx = _as_index(value)
    if dom.problem == "tsp":
        allowed = call_context["unvisited_nodes"]
    else:
        allowed = list(call_context["feasible_unvisited"]) + [call_context["depot"]]
    if idx not in allowed:
        raise ProgramFailure(INFEASIBLE_OUTPUT, f"selector returned node {idx}, which is not an allowed choice")
    return idx


def heuristic_args(domain: str, instance) -> tuple:
    """Interface arguments for an ACO desirability program, in declared order."""
    dom = get_domain(domain)
    if dom.problem == "tsp":
        return (_read_only(instance.distances),)
    if dom.problem == "cvrp":
        return (_read_only(instance.distances), _read_only(instance.coordinates),
                _read_only(instance.demands), float(instance.capacity))
    if dom.problem == "op":
        return (_read_only(instance.prizes), _read_only(instance.distances), float(instance.max_length))
    if dom.problem == "mkp":
        return (_read_only(instance.values), _read_only(instance.weights))
    raise ValueError(f"{domain} is not an ACO domain")


def expected_heuristic_shape(domain: str, instance) -> tuple:
    return (instance.n,) if get_domain(domain).problem == "mkp" else (instance.n, instance.n)


def sanitize_heuristic(value, shape: tuple) -> np.ndarray:
    """Coerce a desirability output to a finite, strictly positive float array.

    Negative, zero, NaN and infinite entries become ETA_FLOOR. Wrong shape,
    non-numeric content, or no usable positive entry is infeasible_output.
    """
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProgramFailure(INFEASIBLE_OUTPUT, f"heuristic output is not numeric: {exc}") from None
    if arr.shape != tuple(shape):
        raise ProgramFailure(INFEASIBLE_OUTPUT, f"heuristic output has shape {arr.shape}, expected {tuple(shape)}")
    good = np.isfinite(arr) & (arr > 0)
    if not good.any():
        raise ProgramFailure(INFEASIBLE_OUTPUT, "heuristic output has no positive finite entry")
    arr[~good] = ETA_FLOOR
    return arr


def _compute_heuristic(program: HeuristicProgram, domain: str, instance):
    raw = _call(program.function, heuristic_args(domain, instance))
    return sanitize_heuristic(raw, expected_heuristic_shape(domain, instance))


def invoke_matrix_heuristic(program: HeuristicProgram, instance, limits: Limits = DEFAULT_LIMITS) -> np.ndarray:
    """Run an ACO desirability program on ``instance`` and return the sanitized output."""
    dom = get_domain(program.domain)
    if dom.is_constructive:
        raise ValueError(f"{program.domain} is not an ACO domain")
    return run_isolated(_compute_heuristic, (program, program.domain, instance), limits).unwrap()
