"""Send sites, the code cache, and the IR execution loop."""

from ..errors import CompileDuringGC, HostedError, RecursiveDNU, StaleCode
from ..objectmodel import SMI_MAX, SMI_MIN, tag_small_integer, untag_small_integer
from . import ir
from .ir import ExecutableCode, f32
from .nativizer import Nativizer


class HostValue:
    """Opaque engine entity (method, code, space, record) on the hosted stack.

    Never stored into heap slots; dispatch maps each kind to a kernel
    behavior so hosted code can send messages to them.
    """

    __slots__ = ("kind", "obj")

    def __init__(self, kind, obj):
        self.kind = kind
        self.obj = obj

    def __repr__(self):
        return "<Host %s %r>" % (self.kind, self.obj)


class SendSite:
    """Per-call-site cache of the last (behavior, code) binding."""

    __slots__ = ("selector", "cached_behavior", "cached_code", "rebind_count",
                 "megamorphic")

    MEGAMORPHIC_LIMIT = 8

    def __init__(self, selector):
        self.selector = selector
        self.cached_behavior = 0
        self.cached_code = None
        self.rebind_count = 0
        self.megamorphic = False

    def bind(self, behavior_oop, code):
        self.rebind_count += 1
        if self.rebind_count > self.MEGAMORPHIC_LIMIT:
            self.megamorphic = True
            self.cached_behavior = 0
            self.cached_code = None
            return
        self.cached_behavior = behavior_oop
        self.cached_code = code

    def unbind(self):
        self.cached_behavior = 0
        self.cached_code = None

    def __repr__(self):
        state = "megamorphic" if self.megamorphic else (
            "bound" if self.cached_code else "unbound")
        return "<SendSite #%s %s rebinds=%d>" % (self.selector, state, self.rebind_count)


class CodeCache:
    """BytecodeMethod identity -> ExecutableCode, with simple FIFO eviction."""

    def __init__(self, capacity=65536):
        self.entries = {}
        self.order = []
        self.capacity = capacity
        self.compilations = 0
        self.hits = 0
        self.misses = 0
        self.invalidations = 0

    def get(self, method):
        return self.entries.get(id(method))

    def put(self, method, code):
        key = id(method)
        if key not in self.entries:
            self.order.append((key, method))
            if len(self.order) > self.capacity:
                old_key, _ = self.order.pop(0)
                self.entries.pop(old_key, None)
        self.entries[key] = code

    def remove(self, method):
        code = self.entries.pop(id(method), None)
        if code is not None:
            self.order = [(k, m) for k, m in self.order if k != id(method)]
        return code

    def clear(self):
        self.entries.clear()
        self.order = []

    def __contains__(self, method):
        return id(method) in self.entries

    def __len__(self):
        return len(self.entries)

    def methods(self):
        return [m for _, m in self.order]

    def stats(self):
        return {
            "compilations": self.compilations,
            "hits": self.hits,
            "misses": self.misses,
            "invalidations": self.invalidations,
            "entries": len(self.entries),
            "capacity": self.capacity,
        }


class Frame:
    __slots__ = ("code", "receiver", "args", "temps", "ostack", "overflow")

    def __init__(self, code, receiver, args, temp_count):
        self.code = code
        self.receiver = receiver
        self.args = args
        self.temps = [0] * temp_count
        self.ostack = []
        self.overflow = False


class _Tail:
    __slots__ = ("code", "receiver", "args")

    def __init__(self, code, receiver, args):
        self.code = code
        self.receiver = receiver
        self.args = args


class Engine:
    """Compiles methods to ExecutableCode and runs them."""

    def __init__(self, rt, inline_cache=True, cache_enabled=True):
        self.rt = rt
        self.cache = CodeCache()
        self.pinned = {}
        self.send_sites = []
        self.frames = []
        self.pending_stack = []
        self.nativizer = Nativizer(self)
        self.inline_cache = inline_cache
        self.cache_enabled = cache_enabled
        self.lookup_count = 0
        self.send_count = 0
        self.rebind_count = 0
        self.should_cache_override = None
        self.static_bindings = {
            "cachedLookup:": self._static_cached_lookup,
            "==": self._static_identical,
            "doesNotUnderstandSelector:": self._static_dnu,
            "prepareForExecution": self._static_prepare,
            "nativeCode": self._static_native_code,
            "behavior": self._static_behavior,
            "when:use:": self._static_when_use,
        }
        self.dispatch_code = None   # installed at bootstrap
        self.dispatch_method = None
        self.method_entry_hook = None
        self.smi_fast = True
        self.trace_depth_probe = None

    # -- code cache ---------------------------------------------------------------

    def should_cache(self, method):
        if self.should_cache_override is not None:
            return self.should_cache_override(method)
        return not method.transient

    def native_code_for(self, method):
        """Cache-first lookup; compiles on miss, caching per policy. Only
        an actual compilation is illegal while a pass is active."""
        cached = self.cache.get(method)
        if cached is not None and not cached.invalidated:
            self.cache.hits += 1
            return cached
        pinned = self.pinned.get(id(method))
        if pinned is not None and not pinned.invalidated:
            # precompiled before GC could ever need it; re-registering the
            # surviving code is not a compilation
            self.cache.put(method, pinned)
            return pinned
        if self.rt.heap.in_pass:
            raise CompileDuringGC("cannot compile %r during a GC pass" % method)
        self.cache.misses += 1
        code = self.compile(method)
        if self.cache_enabled and self.should_cache(method):
            self.cache.put(method, code)
        return code

    def compile(self, method, static=None):
        if self.rt.heap.in_pass:
            raise CompileDuringGC("cannot compile %r during a GC pass" % method)
        self.cache.compilations += 1
        self.rt.emit_event("compilation", {"selector": method.selector,
                                           "owner": getattr(method.owner, "name", None)})
        if method.builtin is not None:
            fn = self.rt.builtins.get(method.builtin)
            if fn is None:
                raise HostedError("unknown builtin #%s" % method.builtin)
            return ExecutableCode(method, builtin_fn=fn, temp_count=0)
        use_static = method.static_bind if static is None else static
        return self.nativizer.nativize(method, static=use_static)

    def prepare_for_execution(self, method):
        return self.native_code_for(method)

    def pin(self, method):
        """Compile now and keep the code reachable across cache clears."""
        code = self.native_code_for(method)
        code.pinned = True
        self.pinned[id(method)] = code
        return code

    def has_native_code(self, method):
        code = self.cache.get(method)
        return code is not None and not code.invalidated

    def clear_code_cache(self):
        if self.rt.heap.in_pass:
            raise CompileDuringGC("cannot clear the code cache during a GC pass")
        self.cache.clear()
        for site in self.send_sites:
            site.unbind()

    def invalidate(self, behavior, selector=None, old_method=None):
        """Reset affected send sites; evict the replaced method's code."""
        self.cache.invalidations += 1
        if old_method is not None:
            code = self.cache.remove(old_method)
            if code is not None:
                code.invalidated = True
            pinned = self.pinned.pop(id(old_method), None)
            if pinned is not None:
                pinned.invalidated = True
        for site in self.send_sites:
            if selector is not None and site.selector != selector:
                continue
            if site.cached_behavior and behavior is not None:
                if not self.rt.anchor_inherits_from(site.cached_behavior, behavior):
                    continue
            site.unbind()
        if behavior is not None and self.rt.affects_small_integers(behavior):
            self.smi_fast = False
        self.rt.emit_event("invalidation", {
            "behavior": getattr(behavior, "name", None),
            "selector": selector,
        })

    def make_send_site(self, selector):
        site = SendSite(selector)
        self.send_sites.append(site)
        return site

    # -- dispatch --------------------------------------------------------------------

    def send(self, site, receiver, args):
        """Full dispatch through a send site."""
        rt = self.rt
        behavior = rt.behavior_anchor_of(receiver)
        if self.inline_cache and not site.megamorphic:
            code = site.cached_code
            if code is not None and site.cached_behavior == behavior:
                return self.execute(code, receiver, args)
            return self._dispatch_miss(site, receiver, args)
        # always-lookup mode (disabled caches or megamorphic site)
        method = self.lookup(behavior, site.selector)
        if method is None:
            return self._send_dnu(receiver, site.selector)
        return self.execute(self.native_code_for(method), receiver, args)

    def send_by_selector(self, receiver, selector, args):
        """Dispatch without a send site (perform:, services, tests)."""
        behavior = self.rt.behavior_anchor_of(receiver)
        method = self.lookup(behavior, selector)
        if method is None:
            return self._send_dnu(receiver, selector)
        return self.execute(self.native_code_for(method), receiver, args)

    def _dispatch_miss(self, site, receiver, args):
        if self.dispatch_code is None:   # before the kernel dispatch is pinned
            method = self.lookup(self.rt.behavior_anchor_of(receiver), site.selector)
            if method is None:
                return self._send_dnu(receiver, site.selector)
            code = self.native_code_for(method)
            site.bind(self.rt.behavior_anchor_of(receiver), code)
            self.rebind_count += 1
            return self.execute(code, receiver, args)
        code = self.dispatch_code
        if self.dispatch_method is not None:
            code = self.native_code_for(self.dispatch_method)
        # mutable so root enumeration can update these across a collection
        pending = [receiver, args]
        self.pending_stack.append(pending)
        try:
            return self.execute(code, HostValue("sendsite", site),
                                [pending[0]])
        finally:
            self.pending_stack.pop()

    def lookup(self, behavior_anchor, selector):
        self.lookup_count += 1
        b = self.rt.behavior_by_anchor.get(behavior_anchor)
        while b is not None:
            method = b.methods.get(selector)
            if method is not None:
                return method
            b = b.super_behavior
        return None

    def _send_dnu(self, receiver, selector):
        behavior = self.rt.behavior_anchor_of(receiver)
        handler = self.lookup(behavior, "doesNotUnderstandSelector:")
        if handler is None:
            raise RecursiveDNU("no doesNotUnderstandSelector: for #%s" % selector)
        sym = self.rt.intern(selector)
        return self.execute(self.native_code_for(handler), receiver, [sym])

    # -- statically bound helpers (the kernel dispatch method) ---------------------------

    def _static_cached_lookup(self, receiver, args):
        selector = self.rt.symbol_name(args[0])
        method = self.lookup(self.rt.behavior_anchor_of(receiver), selector)
        if method is None:
            return self.rt.nil_oop
        return HostValue("method", method)

    def _static_identical(self, receiver, args):
        other = args[0]
        if isinstance(receiver, HostValue) or isinstance(other, HostValue):
            same = receiver is other or (
                isinstance(receiver, HostValue) and isinstance(other, HostValue)
                and receiver.obj is other.obj)
        else:
            same = receiver == other
        return self.rt.true_oop if same else self.rt.false_oop

    def _static_dnu(self, receiver, args):
        selector = self.rt.symbol_name(args[0])
        return self._send_dnu(receiver, selector)

    def _static_prepare(self, receiver, args):
        self.native_code_for(receiver.obj)
        return receiver

    def _static_native_code(self, receiver, args):
        return HostValue("code", self.native_code_for(receiver.obj))

    def _static_behavior(self, receiver, args):
        return self.rt.behavior_anchor_of(receiver)

    def _static_when_use(self, receiver, args):
        site = receiver.obj
        behavior_oop, code = args[0], args[1].obj
        site.bind(behavior_oop, code)
        self.rebind_count += 1
        self.rt.emit_event("sendSiteRebind", {"selector": site.selector,
                                              "rebinds": site.rebind_count})
        return receiver

    # -- execution ------------------------------------------------------------------------

    def execute(self, code, receiver, args):
        while True:
            if code.invalidated:
                raise StaleCode("entered invalidated code for %r" % code.origin)
            if code.builtin_fn is not None:
                frame = Frame(code, receiver, list(args), 0)
                self.frames.append(frame)
                try:
                    if self.method_entry_hook is not None:
                        self.method_entry_hook(code.origin)
                    result = code.builtin_fn(self.rt, frame, receiver, frame.args)
                finally:
                    self.frames.pop()
                if isinstance(result, _Tail):
                    code, receiver, args = result.code, result.receiver, result.args
                    continue
                return result
            frame = Frame(code, receiver, list(args), code.temp_count)
            self.frames.append(frame)
            try:
                if self.method_entry_hook is not None:
                    self.method_entry_hook(code.origin)
                self.rt.safepoint()
                result = self._run(frame)
            finally:
                self.frames.pop()
            if isinstance(result, _Tail):
                code, receiver, args = result.code, result.receiver, result.args
                continue
            return result

    def _run(self, frame):
        ops = frame.code.ops
        ostack = frame.ostack
        rt = self.rt
        heap = rt.heap
        true_oop = rt.true_oop
        false_oop = rt.false_oop
        ip = 0
        n = len(ops)
        while ip < n:
            node = ops[ip]
            kind = node.kind
            ip += 1
            if kind == ir.CONSTANT:
                ostack.append(node.value)
            elif kind == ir.TEMP_REF:
                ostack.append(frame.temps[node.index])
            elif kind == ir.ARG_REF:
                ostack.append(frame.args[node.index])
            elif kind == ir.SELF_REF:
                ostack.append(frame.receiver)
            elif kind == ir.TEMP_STORE:
                frame.temps[node.index] = ostack.pop()
            elif kind == ir.SEND:
                argc = node.argc
                site = node.site
                if argc:
                    args = ostack[len(ostack) - argc:]
                    del ostack[len(ostack) - argc:]
                else:
                    args = []
                receiver = ostack.pop()
                if self.smi_fast and isinstance(receiver, int) and receiver & 1 \
                        and argc == 1 and isinstance(args[0], int) and args[0] & 1:
                    fast = _SMI_FAST.get(node.selector)
                    if fast is not None:
                        result = fast(self, receiver, args[0])
                        if result is not None:
                            ostack.append(result)
                            continue
                self.send_count += 1
                ostack.append(self.send(site, receiver, args))
            elif kind == ir.POP:
                ostack.pop()
            elif kind == ir.BRANCH:
                value = ostack.pop()
                if value == true_oop:
                    taken = node.jump_if
                elif value == false_oop:
                    taken = not node.jump_if
                else:
                    raise HostedError("conditional on a non-boolean")
                if taken:
                    ip = node.target
            elif kind == ir.JUMP:
                if node.poll:
                    rt.safepoint()
                ip = node.target
            elif kind == ir.LOAD:
                tag = node.type_tag
                index = ostack.pop()
                base = ostack.pop()
                if tag == ir.T_WORD:
                    ostack.append(heap.read_slot(base, (index >> 1) if index < (1 << 63)
                                                 else (index >> 1) - (1 << 63)))
                elif tag == ir.T_BYTE:
                    off = untag_small_integer(index)
                    ostack.append((heap.mem[base + off] << 1) | 1)
                elif tag == ir.T_WORD32:
                    off = untag_small_integer(index)
                    ostack.append((heap.read_u32(base + off) << 1) | 1)
                elif tag == ir.T_FLOAT32:
                    idx = untag_small_integer(index)
                    value = rt.read_f32(base, idx)
                    ostack.append(rt.box_float(value))
                else:  # SIMD: four consecutive Float32 lanes
                    idx = untag_small_integer(index)
                    ostack.append(HostValue("simd", rt.read_simd4(base, idx)))
            elif kind == ir.STORE:
                tag = node.type_tag
                value = ostack.pop()
                index = ostack.pop()
                base = ostack.pop()
                if tag == ir.T_WORD:
                    rt.store_slot(base, untag_small_integer(index), value,
                                  checked=not node.unchecked)
                elif tag == ir.T_BYTE:
                    heap.mem[base + untag_small_integer(index)] = \
                        untag_small_integer(value) & 0xFF
                elif tag == ir.T_WORD32:
                    heap.write_u32(base + untag_small_integer(index),
                                   untag_small_integer(value))
                elif tag == ir.T_FLOAT32:
                    rt.write_f32(base, untag_small_integer(index), rt.float_value(value))
                else:
                    rt.write_simd4(base, untag_small_integer(index), value.obj)
                ostack.append(value)
            elif kind == ir.BIT_AND:
                b = ostack.pop()
                ostack.append(ostack.pop() & b)
            elif kind == ir.BIT_OR:
                b = ostack.pop()
                ostack.append(ostack.pop() | b)
            elif kind == ir.BIT_SHIFT:
                amount = untag_small_integer(ostack.pop())
                value = untag_small_integer(ostack.pop())
                shifted = value << amount if amount >= 0 else value >> (-amount)
                ostack.append(tag_small_integer(shifted))
            elif kind == ir.NE_ZERO:
                value = ostack.pop()
                zero = 0 if node.unchecked else 1   # raw zero vs tagged zero
                ostack.append(false_oop if value == zero else true_oop)
            elif kind == ir.SMI_PLUS_OVF:
                b = ostack.pop()
                a = ostack.pop()
                total = untag_small_integer(a) + untag_small_integer(b)
                if total > SMI_MAX or total < SMI_MIN:
                    frame.overflow = True
                    wrapped = ((total - SMI_MIN) % (1 << 63)) + SMI_MIN
                else:
                    frame.overflow = False
                    wrapped = total
                ostack.append(tag_small_integer(wrapped))
            elif kind == ir.OVERFLOW_TEST:
                ostack.append(true_oop if frame.overflow else false_oop)
            elif kind == ir.FLOAT_PLUS:
                b = ostack.pop()
                a = ostack.pop()
                value = f32(rt.float_value(a) + rt.float_value(b))
                ostack.append(rt.box_float(value))
            elif kind == ir.SIMD_FLOAT_PLUS:
                b = ostack.pop().obj
                a = ostack.pop().obj
                ostack.append(HostValue("simd", (
                    f32(a[0] + b[0]), f32(a[1] + b[1]),
                    f32(a[2] + b[2]), f32(a[3] + b[3]))))
            elif kind == ir.RETURN:
                return ostack.pop()
            elif kind == ir.RETURN_SELF:
                return frame.receiver
            elif kind == ir.MAKE_CLOSURE:
                ostack.append(rt.make_closure(frame, node))
            elif kind == ir.STATIC_SEND:
                argc = node.argc
                if argc:
                    args = ostack[len(ostack) - argc:]
                    del ostack[len(ostack) - argc:]
                else:
                    args = []
                receiver = ostack.pop()
                ostack.append(node.fn(receiver, args))
            elif kind == ir.SUPER_SEND:
                argc = node.argc
                if argc:
                    args = ostack[len(ostack) - argc:]
                    del ostack[len(ostack) - argc:]
                else:
                    args = []
                receiver = ostack.pop()
                ostack.append(self._super_send(node, receiver, args))
            elif kind == ir.TRANSFER_CONTROL:
                code_value = ostack.pop()
                receiver = ostack.pop()
                if self.pending_stack:
                    _, args = self.pending_stack[-1]
                else:
                    args = []
                return _Tail(code_value.obj, receiver, args)
            elif kind == ir.ADDRESS_OF_OBJECT:
                ostack.append(tag_small_integer(ostack.pop()))
            elif kind == ir.OBJECT_AT_ADDRESS:
                ostack.append(untag_small_integer(ostack.pop()))
            elif kind == ir.HOST_SLOT:
                ostack.append(rt.host_slot_read(ostack.pop(), node.selector))
            else:
                raise HostedError("unknown IR kind %d" % kind)
        return frame.receiver

    def _super_send(self, node, receiver, args):
        owner = node.block_info
        start = owner.super_behavior if owner is not None else None
        self.lookup_count += 1
        b = start
        method = None
        while b is not None:
            method = b.methods.get(node.selector)
            if method is not None:
                break
            b = b.super_behavior
        if method is None:
            return self._send_dnu(receiver, node.selector)
        return self.execute(self.native_code_for(method), receiver, args)

    # -- roots --------------------------------------------------------------------------

    def enumerate_roots(self, visit):
        for frame in self.frames:
            if isinstance(frame.receiver, int):
                frame.receiver = visit(frame.receiver)
            for lst in (frame.args, frame.temps, frame.ostack):
                for i, v in enumerate(lst):
                    if isinstance(v, int):
                        lst[i] = visit(v)
        for pending in self.pending_stack:
            if isinstance(pending[0], int):
                pending[0] = visit(pending[0])
            args = pending[1]
            for i, v in enumerate(args):
                if isinstance(v, int):
                    args[i] = visit(v)
        for site in self.send_sites:
            if site.cached_behavior:
                site.cached_behavior = visit(site.cached_behavior)
        for method in self.cache.methods():
            lits = method.literals
            for i, v in enumerate(lits):
                if isinstance(v, int):
                    lits[i] = visit(v)


def _smi_fast_add(engine, a, b):
    total = untag_small_integer(a) + untag_small_integer(b)
    if SMI_MIN <= total <= SMI_MAX:
        return tag_small_integer(total)
    return None


def _smi_fast_sub(engine, a, b):
    total = untag_small_integer(a) - untag_small_integer(b)
    if SMI_MIN <= total <= SMI_MAX:
        return tag_small_integer(total)
    return None


def _smi_fast_mul(engine, a, b):
    total = untag_small_integer(a) * untag_small_integer(b)
    if SMI_MIN <= total <= SMI_MAX:
        return tag_small_integer(total)
    return None


def _smi_cmp(op):
    def fast(engine, a, b):
        av = untag_small_integer(a)
        bv = untag_small_integer(b)
        return engine.rt.true_oop if op(av, bv) else engine.rt.false_oop
    return fast


_SMI_FAST = {
    "+": _smi_fast_add,
    "-": _smi_fast_sub,
    "*": _smi_fast_mul,
    "<": _smi_cmp(lambda a, b: a < b),
    "<=": _smi_cmp(lambda a, b: a <= b),
    ">": _smi_cmp(lambda a, b: a > b),
    ">=": _smi_cmp(lambda a, b: a >= b),
    "=": _smi_cmp(lambda a, b: a == b),
    "~=": _smi_cmp(lambda a, b: a != b),
}
