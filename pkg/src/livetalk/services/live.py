"""Live surface: evaluation, hot method replacement, instance-specific
methods, and the benchmark harness."""

import time
import statistics

from ..errors import (
    DoesNotUnderstand, HostedError, NoSuchMethod, ParseError, LexError, VMError,
)
from ..frontend import compile_method, parse_method
from ..memory import AreaUsage


def repl_eval(rt, source):
    """Evaluate source as a transient doIt; return the printString."""
    result = rt.evaluate(source)
    return rt.print_string(result)


def repl_eval_safely(rt, source):
    """repl_eval with diagnostics instead of exceptions (the REPL loop)."""
    try:
        return True, repl_eval(rt, source)
    except (ParseError, LexError) as exc:
        return False, "Parse error: %s" % exc
    except DoesNotUnderstand as exc:
        return False, "Error: %s does not understand #%s" % (
            exc.receiver_class_name, exc.selector)
    except VMError as exc:
        return False, "Error: %s" % exc


GC_CRITICAL_CLASSES = {"Memory", "EdenCollector", "SendSite", "HeapSpace"}


def replace_method(rt, behavior_name, source, class_side=False):
    """Swap in a redefinition; a rejected replacement changes nothing."""
    if rt.heap.in_pass:
        raise HostedError("cannot replace methods during a GC pass")
    behavior = rt.behaviors.get(behavior_name)
    if behavior is None:
        raise NoSuchMethod("no class named %s" % behavior_name)
    ast = parse_method(source)
    slots = [] if class_side else behavior.all_slot_names()
    target = behavior.meta if class_side else behavior
    method = compile_method(ast, slots=slots, literals=rt, owner=target)
    old = target.methods.get(ast.selector)
    pinned = old is not None and id(old) in rt.engine.pinned
    if pinned or behavior_name in GC_CRITICAL_CLASSES:
        method.static_bind = old.static_bind if old is not None else False
        if method.builtin is None:
            # precompile and validate before touching anything
            rt.engine.nativizer.nativize(method, static=method.static_bind)
    rt.register_method(method)
    target.methods[ast.selector] = method
    method.owner = target
    rt.engine.invalidate(behavior, ast.selector, old_method=old)
    if pinned or behavior_name in GC_CRITICAL_CLASSES:
        try:
            rt.engine.pin(method)
            _warm_policies(rt)
        except VMError:
            # restore the previous version; the new one failed its warmup
            if old is not None:
                target.methods[ast.selector] = old
                rt.engine.invalidate(behavior, ast.selector, old_method=method)
                rt.engine.pin(old)
            else:
                target.methods.pop(ast.selector, None)
            raise
    return method


def _warm_policies(rt):
    """Compile everything a fresh policy touches while no pass is active."""
    from ..kernel.bootstrap import build_usage_array
    usages = build_usage_array(rt, [AreaUsage(0, 1024, 128), AreaUsage(1, 1024, 64),
                                AreaUsage(2, 1024, 1024)])
    rt.engine.send_by_selector(rt.memory_oop, "shouldTriggerFull", [])
    rt.engine.send_by_selector(rt.memory_oop, "selectEvacuationAreas:", [usages])
    from ..kernel.bootstrap import pin_all_kernel_code
    pin_all_kernel_code(rt)


def add_instance_method(rt, target_oop, source):
    """Attach a method to one object via a cloned behavior; re-adding the
    same source reuses the previous method so its code stays cached."""
    behavior = rt.make_instance_specific(target_oop)
    ast = parse_method(source)
    key = (ast.selector, source.strip())
    method = behavior.detached_methods.get(key)
    if method is None:
        method = compile_method(ast, slots=behavior.all_slot_names(),
                                literals=rt, owner=behavior)
        rt.register_method(method)
        behavior.detached_methods[key] = method
    behavior.methods[ast.selector] = method
    method.owner = behavior
    rt.engine.invalidate(behavior, ast.selector, old_method=None)
    return method


def remove_instance_method(rt, target_oop, selector):
    behavior = rt.behavior_of_value(target_oop)
    if behavior is None or not behavior.instance_specific or \
            selector not in behavior.methods:
        raise NoSuchMethod("no instance method #%s" % selector)
    behavior.methods.pop(selector)
    # the method's cached code stays valid; only the binding went away
    rt.engine.invalidate(behavior, selector, old_method=None)


class BenchmarkFailure(VMError):
    def __init__(self, name, expected, actual):
        self.name = name
        self.expected = expected
        self.actual = actual
        super().__init__("benchmark %s failed: expected %r, got %r"
                         % (name, expected, actual))


BENCHMARKS = {"Sieve": 669, "Towers": 8191, "List": 10, "Bounce": 1331}


def run_benchmarks(rt, names=None, iterations=5):
    """Run the bundled benchmarks; each validates its checksum."""
    names = list(names) if names else sorted(BENCHMARKS)
    unknown = [n for n in names if n not in BENCHMARKS]
    if unknown:
        raise HostedError("unknown benchmark(s) %s; available: %s"
                          % (", ".join(unknown), ", ".join(sorted(BENCHMARKS))))
    bench_class = rt.global_value("Benchmarks")
    report = {}
    for name in names:
        times = []
        result = None
        for _ in range(iterations):
            t0 = time.perf_counter()
            result = rt.engine.send_by_selector(
                bench_class, "run:", [rt.make_string(name)])
            times.append((time.perf_counter() - t0) * 1000.0)
        actual = rt.integer_value(result)
        if actual != BENCHMARKS[name]:
            raise BenchmarkFailure(name, BENCHMARKS[name], actual)
        report[name] = {
            "result": actual,
            "iterations": iterations,
            "medianMillis": round(statistics.median(times), 3),
        }
    return report
