"""Loads the kernel sources, wires the system objects, precompiles and pins
everything the collectors execute, and installs the hosted GC policies."""

from pathlib import Path

from ..errors import BootstrapError, DoesNotUnderstand, SourceError
from ..frontend import compile_method, parse_chunks, parse_method
from ..frontend.chunks import ClassDefinition, DoIt, MethodChunk
from ..memory import AreaUsage
from ..objectmodel import tag_small_integer

ST_DIR = Path(__file__).parent / "st"
KERNEL_FILES = ["objects.st", "collections.st", "memory.st", "dispatch.st",
                "tests.st", "benchmarks.st"]


def boot(runtime=None, **kwargs):
    """Create (or take) a runtime and bootstrap the kernel into it."""
    from ..runtime import Runtime
    rt = runtime or Runtime(**kwargs)
    bootstrap(rt)
    return rt


def bootstrap(rt, extra_files=()):
    sources = [(name, (ST_DIR / name).read_text()) for name in KERNEL_FILES]
    for path in extra_files:
        sources.append((str(path), Path(path).read_text()))
    doits = []
    for origin, text in sources:
        for item in parse_chunks(text, origin=origin):
            if isinstance(item, ClassDefinition):
                rt.define_class(item.name, item.superclass, item.slots, item.layout)
            elif isinstance(item, MethodChunk):
                install_chunk(rt, item)
            elif isinstance(item, DoIt):
                doits.append(item)
    _fix_nil_globals(rt)
    _wire_system_objects(rt)
    _pin_dispatch(rt)
    _warmup(rt)
    rt.memory.policy = HostedPolicy(rt)
    rt.booted = True
    for item in doits:
        rt.evaluate(item.source)
    return rt


def install_chunk(rt, chunk):
    behavior = rt.behaviors.get(chunk.behavior)
    if behavior is None:
        raise BootstrapError("methods for undefined class %s" % chunk.behavior,
                             chunk=chunk.label)
    try:
        ast = parse_method(chunk.source)
        slots = [] if chunk.class_side else behavior.all_slot_names()
        target = behavior.meta if chunk.class_side else behavior
        method = compile_method(ast, slots=slots, literals=rt, owner=target)
    except SourceError as exc:
        raise BootstrapError(str(exc), chunk=chunk.label) from exc
    rt.register_method(method)
    old = target.methods.get(ast.selector)
    behavior.install(ast.selector, method, chunk.class_side)
    if rt.booted:
        rt.engine.invalidate(behavior, ast.selector, old_method=old)
    return method


def install_method_source(rt, behavior_name, source, class_side=False):
    """Compile and install one method from source (live replacement path)."""
    chunk = MethodChunk(behavior_name, class_side, source, 0)
    return install_chunk(rt, chunk)


def _fix_nil_globals(rt):
    nil = rt.nil_oop
    for assoc in rt.globals.values():
        if rt.heap.read_slot(assoc, 2) == 0:
            rt.heap.write_slot_raw(assoc, 2, nil)


def _wire_system_objects(rt):
    heap = rt.heap
    space_cls = rt.behaviors["HeapSpace"]
    handles = []
    for i in range(4):
        h = heap.allocate_pinned(1, space_cls.anchor)
        heap.write_slot_raw(h, 1, tag_small_integer(i))
        handles.append(h)
    mem_cls = rt.behaviors["Memory"]
    rt.memory_oop = heap.allocate_pinned(len(mem_cls.all_slot_names()), mem_cls.anchor)
    for i, h in enumerate(handles):
        heap.write_slot_raw(rt.memory_oop, i + 1, h)
    rt.system_oop = heap.allocate_pinned(0, rt.behaviors["System"].anchor)
    rt.set_global("Smalltalk", rt.system_oop)


def _pin_dispatch(rt):
    site_behavior = rt.behaviors["SendSite"]
    method = site_behavior.methods.get("_dispatchOn:")
    if method is None:
        raise BootstrapError("SendSite>>_dispatchOn: missing from the kernel")
    method.static_bind = True
    rt.engine.dispatch_method = method
    rt.engine.dispatch_code = rt.engine.pin(method)


def build_usage_array(rt, usages):
    """A heap Array of AreaUsage instances for the hosted policy. GC stays
    off while the array is under construction so nothing moves."""
    rt.memory.disable_gc()
    try:
        cls = rt.behaviors["AreaUsage"].anchor
        items = []
        for u in usages:
            oop = rt.instantiate(cls)
            rt.heap.write_slot_raw(oop, 1, tag_small_integer(u.area_index))
            rt.heap.write_slot_raw(oop, 2, tag_small_integer(u.capacity))
            rt.heap.write_slot_raw(oop, 3, tag_small_integer(u.live_bytes))
            items.append(oop)
        return rt.make_array(items)
    finally:
        rt.memory.enable_gc()


def _warmup(rt):
    """Execute every path the collectors can reach, then pin the lot, so no
    compilation is ever needed while a pass is active."""
    engine = rt.engine
    send = engine.send_by_selector
    # arithmetic including the overflow path
    send(tag_small_integer((1 << 62) - 1), "+", [tag_small_integer(1)])
    send(tag_small_integer(7), "+", [tag_small_integer(8)])
    send(tag_small_integer(7), "printString", [])
    # the dispatch-miss handler itself and doesNotUnderstand
    try:
        send(rt.nil_oop, "doesNotUnderstandSelector:", [rt.intern("warmup")])
    except DoesNotUnderstand:
        pass
    # hosted policies over synthetic usage data
    usages = build_usage_array(rt, [AreaUsage(0, 1024, 64), AreaUsage(1, 1024, 128),
                                AreaUsage(2, 1024, 1024)])
    send(rt.memory_oop, "shouldTriggerFull", [])
    send(rt.memory_oop, "selectEvacuationAreas:", [usages])
    # the leak-detection flow compiles the weak set and space iteration
    rt.evaluate("Smalltalk memory objectsSurviving: [nil]")
    # every kernel method (blocks included) is compiled and pinned now, so
    # no collector-reachable path can ever demand compilation mid-pass
    pin_all_kernel_code(rt)


def pin_all_kernel_code(rt):
    stack = list(rt.method_registry)
    while stack:
        method = stack.pop()
        for block in method.block_methods:
            rt.register_method(block)
            stack.append(block)
        rt.engine.pin(method)


class HostedPolicy:
    """Bridges the collector's policy hooks to the kernel's methods."""

    def __init__(self, rt):
        self.rt = rt

    def should_trigger_full(self, old_live, last_full_live):
        rt = self.rt
        result = rt.engine.send_by_selector(rt.memory_oop, "shouldTriggerFull", [])
        return result == rt.true_oop

    def select_evacuation_areas(self, usages):
        rt = self.rt
        arr = build_usage_array(rt, usages)
        result = rt.engine.send_by_selector(
            rt.memory_oop, "selectEvacuationAreas:", [arr])
        return [rt.integer_value(x) for x in rt.array_items(result)]
