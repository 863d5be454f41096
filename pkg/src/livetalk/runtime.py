"""The runtime: behaviors, interning, globals, closures, events, safepoints.

Everything the engine and the kernel need from each other meets here.
"""

import struct
import threading
from collections import deque

from .builtins import REGISTRY as BUILTIN_REGISTRY
from .engine.core import Engine, HostValue
from .errors import BootstrapError, HostedError, HostValueEscape
from .frontend import compile_method
from .frontend.astnodes import Method
from .frontend.parser import parse_expression_body
from .memory import GCConfig, MemoryManager
from .objectmodel import (
    SMI_MAX, SMI_MIN, is_heap_ref, tag_small_integer, untag_small_integer,
)

_F32 = struct.Struct("<f")
_F64 = struct.Struct("<d")
_I64 = struct.Struct("<q")
_SIMD = struct.Struct("<4f")

HOST_KIND_CLASS = {
    "method": "CompiledMethod",
    "methodlist": "MethodList",
    "statslog": "GCStatsLog",
    "gcrecord": "GCStatsRecord",
    "sendsite": "SendSite",
    "code": "NativeCode",
}

HOST_BACKED_CLASSES = set(HOST_KIND_CLASS.values())

SPACE_ROLES = ("eden", "from", "to", "gcScratch")


class MetaBehavior:
    """Class-side view of a behavior; terminal super is Behavior itself."""

    __slots__ = ("owner", "methods")

    def __init__(self, owner):
        self.owner = owner
        self.methods = {}

    @property
    def name(self):
        return self.owner.name + " class"

    @property
    def host_backed(self):
        return False

    @property
    def super_behavior(self):
        sup = self.owner.super_behavior
        if sup is not None:
            return sup.meta
        return self.owner.rt.behaviors.get("Behavior")

    def all_slot_names(self):
        return []

    def __repr__(self):
        return "<MetaBehavior %s>" % self.name


class Behavior:
    """Runtime entity holding a method table and slot layout."""

    def __init__(self, rt, name, super_behavior, slot_names, layout="fixed",
                 instance_specific=False):
        self.rt = rt
        self.name = name
        self.super_behavior = super_behavior
        self.slot_names = list(slot_names)
        self.layout = layout
        self.methods = {}
        self.meta = MetaBehavior(self)
        self.instance_specific = instance_specific
        self.host_backed = name in HOST_BACKED_CLASSES
        self.detached_methods = {}
        heap = rt.heap
        self.meta_anchor = heap.allocate_pinned(0, 0)
        self.anchor = heap.allocate_pinned(0, 0)
        heap.set_behavior(self.meta_anchor, self.meta_anchor)
        heap.set_behavior(self.anchor, self.meta_anchor)
        rt.behavior_by_anchor[self.anchor] = self
        rt.behavior_by_anchor[self.meta_anchor] = self.meta

    def all_slot_names(self):
        names = []
        if self.super_behavior is not None:
            names.extend(self.super_behavior.all_slot_names())
        names.extend(self.slot_names)
        return names

    def lookup_chain(self):
        b = self
        while b is not None:
            yield b
            b = b.super_behavior

    def inherits_from(self, other):
        b = self
        while b is not None:
            if b is other:
                return True
            b = b.super_behavior
        return False

    def install(self, selector, method, class_side=False):
        table = self.meta.methods if class_side else self.methods
        method.owner = self.meta if class_side else self
        table[selector] = method

    def __repr__(self):
        return "<Behavior %s>" % self.name


class Runtime:
    def __init__(self, config=None, inline_cache=True, cache_enabled=True,
                 simd=True, heap_max_bytes=512 * 1024 * 1024):
        self.config = config or GCConfig()
        self.memory = MemoryManager(config=self.config)
        self.heap = self.memory.heap
        self.heap.max_bytes = heap_max_bytes
        self.engine = Engine(self, inline_cache=inline_cache,
                             cache_enabled=cache_enabled)
        self.builtins = BUILTIN_REGISTRY
        self.simd_enabled = simd

        self.behaviors = {}
        self.behavior_by_anchor = {}
        self.globals = {}
        self.constant_globals = set()
        self.symbols = {}
        self.method_registry = []
        self._registered_ids = set()
        self.method_by_id = {}
        self.handles = {}
        self._next_handle = 1

        self.nil_oop = 0
        self.true_oop = 0
        self.false_oop = 0
        self.memory_oop = 0
        self.system_oop = 0
        self._smallint_anchor = 0

        self.event_seq = 0
        self.event_log = []
        self.event_sinks = []
        self.memory.event_hook = lambda t, payload: self.emit_event(t, payload)

        self._requests = deque()
        self._request_lock = threading.Lock()

        self.heap.add_root_provider(self.engine.enumerate_roots)
        self.heap.add_root_provider(self._enumerate_global_roots)
        self.heap.add_root_provider(self._enumerate_handle_roots)
        self.booted = False

    # -- behaviors ------------------------------------------------------------------

    def define_class(self, name, superclass_name, slots=(), layout="fixed"):
        if superclass_name in (None, "nil"):
            sup = None
        else:
            sup = self.behaviors.get(superclass_name)
            if sup is None:
                raise BootstrapError("unknown superclass %r for %s"
                                     % (superclass_name, name))
        existing = self.behaviors.get(name)
        if existing is not None:
            changed = tuple(existing.slot_names) != tuple(slots) or \
                existing.layout != layout or existing.super_behavior is not sup
            existing.slot_names = list(slots)
            existing.layout = layout
            existing.super_behavior = sup
            if changed:
                self.engine.invalidate(existing, None)
            return existing
        b = Behavior(self, name, sup, slots, layout)
        self.behaviors[name] = b
        assoc = self.global_ref(name)
        self.heap.write_barrier_store(assoc, 2, b.anchor)
        if name == "UndefinedObject" and not self.nil_oop:
            self.nil_oop = self.heap.allocate_pinned(0, b.anchor)
            self.memory.nil_oop = self.nil_oop
        elif name == "True" and not self.true_oop:
            self.true_oop = self.heap.allocate_pinned(0, b.anchor)
        elif name == "False" and not self.false_oop:
            self.false_oop = self.heap.allocate_pinned(0, b.anchor)
        elif name == "SmallInteger":
            self._smallint_anchor = b.anchor
        return b

    def behavior_named(self, name):
        b = self.behaviors.get(name)
        if b is None:
            raise HostedError("undefined class %s" % name)
        return b

    def _ensure_behavior(self, name, layout):
        """Placeholder for a core class referenced before its definition;
        the kernel's definition later updates it in place."""
        b = self.behaviors.get(name)
        if b is None:
            b = Behavior(self, name, None, [], layout)
            self.behaviors[name] = b
        return b

    def behavior_anchor_of(self, value):
        if isinstance(value, HostValue):
            cls = HOST_KIND_CLASS.get(value.kind)
            if cls is None or cls not in self.behaviors:
                raise HostedError("no kernel class for host value %r" % value.kind)
            return self.behaviors[cls].anchor
        if value & 1:
            return self._smallint_anchor
        if value == 0:
            return self.behaviors["UndefinedObject"].anchor if self.nil_oop else 0
        return self.heap.behavior_of(value)

    def behavior_of_value(self, value):
        return self.behavior_by_anchor.get(self.behavior_anchor_of(value))

    def behavior_of_class_oop(self, class_oop):
        b = self.behavior_by_anchor.get(class_oop)
        if b is None:
            raise HostedError("not a class object")
        return b.owner if isinstance(b, MetaBehavior) else b

    def class_name_of(self, value):
        try:
            b = self.behavior_of_value(value)
        except HostedError:
            return type(value).__name__
        return b.name if b is not None else "?"

    def anchor_inherits_from(self, anchor, behavior):
        b = self.behavior_by_anchor.get(anchor)
        while b is not None:
            if b is behavior or (isinstance(b, MetaBehavior) and b.owner is behavior):
                return True
            b = b.super_behavior
        return False

    def affects_small_integers(self, behavior):
        b = self.behaviors.get("SmallInteger")
        while b is not None:
            if b is behavior:
                return True
            b = b.super_behavior
        return False

    def is_instance_of(self, oop, class_name):
        b = self.behavior_of_value(oop)
        return b is not None and b.name == class_name

    def is_kind_of_name(self, oop, names):
        b = self.behavior_of_value(oop)
        while b is not None:
            if b.name in names:
                return True
            b = b.super_behavior
        return False

    def make_instance_specific(self, target_oop):
        """Migrate an object to its own cloned behavior (first add)."""
        anchor = self.behavior_anchor_of(target_oop)
        b = self.behavior_by_anchor[anchor]
        if isinstance(b, MetaBehavior):
            raise HostedError("cannot specialize a class object")
        if b.instance_specific:
            return b
        clone = Behavior(self, b.name, b, [], b.layout, instance_specific=True)
        self.heap.set_behavior(target_oop, clone.anchor)
        return clone

    # -- instantiation -----------------------------------------------------------------

    def instantiate(self, class_oop):
        b = self.behavior_of_class_oop(class_oop)
        if b.layout == "fixed":
            n = len(b.all_slot_names())
            oop = self.heap.allocate(n, class_oop)
            nil = self.nil_oop
            for i in range(1, n + 1):
                self.heap.write_slot_raw(oop, i, nil)
            return oop
        if b.layout == "bytes":
            return self.heap.allocate(0, class_oop, bytes_flag=True)
        raise HostedError("%s instances need new: a size" % b.name)

    def instantiate_sized(self, class_oop, n):
        b = self.behavior_of_class_oop(class_oop)
        if n < 0:
            raise HostedError("negative size")
        if b.layout == "variable":
            oop = self.heap.allocate(n, class_oop)
            nil = self.nil_oop
            for i in range(1, n + 1):
                self.heap.write_slot_raw(oop, i, nil)
            return oop
        if b.layout == "bytes":
            return self.heap.allocate(n, class_oop, bytes_flag=True)
        raise HostedError("%s has a fixed layout" % b.name)

    # -- boxed values and strings ----------------------------------------------------------

    def make_string(self, text, pinned=False):
        data = text.encode("utf-8")
        cls = self._ensure_behavior("String", "bytes").anchor
        alloc = self.heap.allocate_pinned if pinned else self.heap.allocate
        oop = alloc(len(data), cls, True)
        self.heap.set_bytes(oop, data)
        return oop

    def intern(self, name):
        oop = self.symbols.get(name)
        if oop is None:
            data = name.encode("utf-8")
            cls = self._ensure_behavior("Symbol", "bytes")
            oop = self.heap.allocate_pinned(len(data), cls.anchor, True)
            self.heap.set_bytes(oop, data)
            self.symbols[name] = oop
        return oop

    def string_value(self, oop):
        if not is_heap_ref(oop) or not self.heap.is_bytes_object(oop):
            raise HostedError("not a string: %r" % oop)
        return self.heap.bytes_of(oop).decode("utf-8", "replace")

    def symbol_name(self, oop):
        return self.string_value(oop)

    def box_float(self, value, pinned=False):
        cls = self.behaviors["Float"].anchor
        alloc = self.heap.allocate_pinned if pinned else self.heap.allocate
        oop = alloc(8, cls, True)
        _F64.pack_into(self.heap.mem, oop + 16, value)
        return oop

    def float_value(self, oop):
        if isinstance(oop, int) and oop & 1:
            return float(untag_small_integer(oop))
        if is_heap_ref(oop) and self.is_instance_of(oop, "Float"):
            return _F64.unpack_from(self.heap.mem, oop + 16)[0]
        raise HostedError("not a number: %s" % self.class_name_of(oop))

    def box_large(self, value, pinned=False):
        if value < -(1 << 63) or value > (1 << 63) - 1:
            from .errors import ArithmeticOverflow
            raise ArithmeticOverflow("value exceeds the 64-bit signed range")
        cls = self.behaviors["LargeInteger"].anchor
        alloc = self.heap.allocate_pinned if pinned else self.heap.allocate
        oop = alloc(8, cls, True)
        _I64.pack_into(self.heap.mem, oop + 16, value)
        return oop

    def large_value(self, oop):
        if isinstance(oop, int) and oop & 1:
            return untag_small_integer(oop)
        return _I64.unpack_from(self.heap.mem, oop + 16)[0]

    def integer_value(self, oop):
        """Host integer from a SmallInteger or LargeInteger oop."""
        if oop & 1:
            return untag_small_integer(oop)
        if self.is_instance_of(oop, "LargeInteger"):
            return self.large_value(oop)
        raise HostedError("not an integer: %s" % self.class_name_of(oop))

    def make_array(self, items=(), pinned=False):
        cls = self.behaviors["Array"].anchor
        alloc = self.heap.allocate_pinned if pinned else self.heap.allocate
        oop = alloc(len(items), cls)
        for i, v in enumerate(items):
            self.heap.write_slot_raw(oop, i + 1, v)
        nil = self.nil_oop
        for i in range(len(items) + 1, self.heap.object_size(oop) + 1):
            self.heap.write_slot_raw(oop, i, nil)
        return oop

    def array_items(self, oop):
        b = self.behavior_of_value(oop)
        if b is not None and b.name == "OrderedCollection":
            items = self.heap.read_slot(oop, 1)
            tally = untag_small_integer(self.heap.read_slot(oop, 2))
            return [self.heap.read_slot(items, i + 1) for i in range(tally)]
        return [self.heap.read_slot(oop, i + 1)
                for i in range(self.heap.object_size(oop))]

    # -- float array access -------------------------------------------------------------------

    def read_f32(self, oop, index):
        return _F32.unpack_from(self.heap.mem, oop + 16 + (index - 1) * 4)[0]

    def write_f32(self, oop, index, value):
        _F32.pack_into(self.heap.mem, oop + 16 + (index - 1) * 4, value)

    def read_simd4(self, oop, index):
        return _SIMD.unpack_from(self.heap.mem, oop + 16 + (index - 1) * 16)

    def write_simd4(self, oop, index, values):
        _SIMD.pack_into(self.heap.mem, oop + 16 + (index - 1) * 16, *values)

    # -- slots ----------------------------------------------------------------------------------

    def store_slot(self, container, index, value, checked=True):
        if isinstance(value, HostValue):
            raise HostValueEscape("host value cannot be stored into the heap")
        if checked:
            self.heap.write_barrier_store(container, index, value)
        else:
            self.heap.store_slot_unchecked(container, index, value)

    def read_int_slot(self, oop, index):
        return untag_small_integer(self.heap.read_slot(oop, index))

    def read_raw_slot(self, oop, index):
        return self.heap.read_slot(oop, index)

    # -- globals ------------------------------------------------------------------------------------

    def global_ref(self, name):
        """The association oop for a global, created on first reference."""
        assoc = self.globals.get(name)
        if assoc is None:
            key = self.intern(name)
            cls = self._ensure_behavior("Association", "fixed").anchor
            assoc = self.heap.allocate_pinned(2, cls)
            self.heap.write_slot_raw(assoc, 1, key)
            self.heap.write_slot_raw(assoc, 2, self.nil_oop)
            self.globals[name] = assoc
        return assoc

    def global_value(self, name):
        assoc = self.globals.get(name)
        return self.heap.read_slot(assoc, 2) if assoc else self.nil_oop

    def set_global(self, name, value):
        assoc = self.global_ref(name)
        self.heap.write_barrier_store(assoc, 2, value)

    def define_constant(self, name):
        """Pin a global's current value and mark it compile-time constant."""
        assoc = self.global_ref(name)
        value = self.heap.read_slot(assoc, 2)
        if is_heap_ref(value) and not self.heap.pinned_contains(value):
            clone = self._pin_clone(value)
            self.heap.write_barrier_store(assoc, 2, clone)
        self.constant_globals.add(assoc)

    def _pin_clone(self, oop):
        heap = self.heap
        units = heap.object_size(oop)
        bytes_flag = heap.is_bytes_object(oop)
        clone = heap.allocate_pinned(units, heap.behavior_of(oop), bytes_flag)
        body = heap.body_bytes(oop)
        heap.mem[clone + 16:clone + 16 + body] = heap.mem[oop + 16:oop + 16 + body]
        return clone

    # -- literal factory (frontend compiler protocol) ----------------------------------------------------

    def integer(self, v):
        if SMI_MIN <= v <= SMI_MAX:
            return tag_small_integer(v)
        return self.box_large(v, pinned=True)

    def float(self, v):
        return self.box_float(v, pinned=True)

    def string(self, v):
        return self.make_string(v, pinned=True)

    def symbol(self, v):
        return self.intern(v)

    def array(self, entries):
        return self.make_array(tuple(entries), pinned=True)

    def boolean(self, v):
        return self.true_oop if v else self.false_oop

    def nil(self):
        return self.nil_oop

    # -- closures --------------------------------------------------------------------------------------------

    def make_closure(self, frame, node):
        method = node.block_info
        ncap = node.argc
        cls = self.behaviors["BlockClosure"].anchor
        clo = self.heap.allocate(2 + method.capture_count, cls)
        caps = frame.ostack[len(frame.ostack) - ncap:] if ncap else []
        if ncap:
            del frame.ostack[len(frame.ostack) - ncap:]
        self.heap.write_slot_raw(clo, 1, tag_small_integer(method.method_id))
        receiver = frame.receiver
        if isinstance(receiver, HostValue):
            raise HostValueEscape("closure over a host-backed receiver")
        self.heap.store_slot_unchecked(clo, 2, receiver)
        for i, v in enumerate(caps):
            if isinstance(v, HostValue):
                raise HostValueEscape("closure capturing a host value")
            self.heap.store_slot_unchecked(clo, 3 + i, v)
        for i in range(len(caps), method.capture_count):
            self.heap.write_slot_raw(clo, 3 + i, self.nil_oop)
        return clo

    def closure_method(self, closure_oop):
        mid = untag_small_integer(self.heap.read_slot(closure_oop, 1))
        method = self.method_by_id.get(mid)
        if method is None:
            raise HostedError("stale block closure")
        return method

    def register_method(self, method):
        self.method_by_id[method.method_id] = method
        if not method.transient and method.method_id not in self._registered_ids:
            self._registered_ids.add(method.method_id)
            self.method_registry.append(method)

    # -- host-backed state ----------------------------------------------------------------------------------------

    def host_slot_read(self, value, name):
        if isinstance(value, HostValue) and value.kind == "sendsite" and \
                name == "selector":
            return self.intern(value.obj.selector)
        raise HostedError("no host slot %r" % name)

    # -- space handles ------------------------------------------------------------------------------------------------

    def space_role_of(self, handle_oop):
        idx = untag_small_integer(self.heap.read_slot(handle_oop, 1))
        return SPACE_ROLES[idx]

    def space_for_role(self, role):
        heap = self.heap
        if role == "eden":
            return heap.eden_segments[0]
        if role == "from":
            return heap.from_space
        if role == "to":
            return heap.to_space
        if role == "gcScratch":
            return heap.scratch
        raise HostedError("unknown space role %r" % role)

    # -- evaluation ------------------------------------------------------------------------------------------------------

    def evaluate(self, source, receiver=None):
        """Compile source as a transient doIt and run it; the value of the
        last statement is the result."""
        from .frontend.astnodes import Return
        temps, body = parse_expression_body(source)
        if body and not isinstance(body[-1], Return):
            body = body[:-1] + [Return(body[-1])]
        ast = Method("doIt", [], temps, body, source=source)
        method = compile_method(ast, slots=[], literals=self, transient=True)
        self.register_method(method)
        code = self.engine.native_code_for(method)
        rcvr = self.nil_oop if receiver is None else receiver
        disabled_depth = self.heap.gc_disabled
        try:
            return self.engine.execute(code, rcvr, [])
        except BaseException:
            # an error escaping hosted code must not leave collection off
            while self.heap.gc_disabled > disabled_depth:
                self.memory.enable_gc()
            raise

    def objects_surviving_source(self, closure_body):
        """Run the leak-detection flow over a closure compiled from source."""
        return self.evaluate(
            "Smalltalk memory objectsSurviving: [%s]" % closure_body)

    def print_string(self, oop):
        result = self.engine.send_by_selector(oop, "printString", [])
        return self.string_value(result)

    # -- events ------------------------------------------------------------------------------------------------------------

    def emit_event(self, type_, payload):
        self.event_seq += 1
        record = {"type": type_, "seq": self.event_seq, "payload": payload}
        self.event_log.append(record)
        for sink in list(self.event_sinks):
            sink(record)
        return record

    # -- safepoints and the service queue ---------------------------------------------------------------------------------------

    def safepoint(self):
        if self._requests and not self.heap.in_pass:
            self._drain_requests()

    def _drain_requests(self):
        while self._requests:
            try:
                fn, done = self._requests.popleft()
            except IndexError:
                break
            try:
                done((True, fn()))
            except Exception as exc:  # noqa: BLE001 - report to the caller
                done((False, exc))

    def call_at_safepoint(self, fn, timeout=10.0):
        """Run fn in the runtime context at the next safepoint (thread-safe)."""
        event = threading.Event()
        box = {}

        def done(result):
            box["result"] = result
            event.set()

        with self._request_lock:
            self._requests.append((fn, done))
        if not event.wait(timeout):
            raise TimeoutError("runtime did not reach a safepoint in time")
        ok, value = box["result"]
        if not ok:
            raise value
        return value

    def run_pending(self):
        """Drain service requests while the runtime is otherwise idle."""
        self.safepoint()

    # -- inspector handles -----------------------------------------------------------------------------------------------------------

    def pin_handle(self, oop):
        handle = self._next_handle
        self._next_handle += 1
        self.handles[handle] = oop
        return handle

    def release_handle(self, handle):
        self.handles.pop(handle, None)

    # -- root providers -------------------------------------------------------------------------------------------------------------------

    def _enumerate_global_roots(self, visit):
        for name, assoc in self.globals.items():
            visit(assoc)

    def _enumerate_handle_roots(self, visit):
        for key in list(self.handles):
            self.handles[key] = visit(self.handles[key])
