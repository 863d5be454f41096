"""Builtin (primitive) methods backing kernel declarations.

Every builtin has signature fn(rt, frame, receiver, args) and returns an
oop or HostValue. Builtins that allocate re-read receiver/args through the
frame afterwards, because a collection may move them.
"""

from .errors import (
    ArithmeticOverflow, DoesNotUnderstand, HostedError, IndexOutOfBounds,
)
from .engine.core import HostValue
from .objectmodel import (
    SMI_MAX, SMI_MIN, tag_small_integer, untag_small_integer,
)

I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1

REGISTRY = {}


def builtin(name):
    def register(fn):
        REGISTRY[name] = fn
        return fn
    return register


def _smi(rt, oop, what="operand"):
    if not (isinstance(oop, int) and oop & 1):
        raise DoesNotUnderstand(rt.class_name_of(oop), what)
    return untag_small_integer(oop)


def _dnu(rt, receiver, selector):
    raise DoesNotUnderstand(rt.class_name_of(receiver), selector)


def _bool(rt, flag):
    return rt.true_oop if flag else rt.false_oop


# -- ProtoObject ----------------------------------------------------------------

@builtin("identical")
def _identical(rt, frame, receiver, args):
    other = args[0]
    if isinstance(receiver, HostValue) or isinstance(other, HostValue):
        same = (isinstance(receiver, HostValue) and isinstance(other, HostValue)
                and receiver.obj is other.obj)
    else:
        same = receiver == other
    return _bool(rt, same)


@builtin("classOf")
def _class_of(rt, frame, receiver, args):
    return rt.behavior_anchor_of(receiver)


@builtin("identityHash")
def _identity_hash(rt, frame, receiver, args):
    if isinstance(receiver, int) and receiver & 1:
        return receiver
    return tag_small_integer(rt.heap.hash_of(receiver))


@builtin("signalError")
def _signal_error(rt, frame, receiver, args):
    raise HostedError(rt.string_value(args[0]))


@builtin("dnuDefault")
def _dnu_default(rt, frame, receiver, args):
    raise DoesNotUnderstand(rt.class_name_of(receiver), rt.symbol_name(args[0]))


@builtin("cachedLookup")
def _cached_lookup(rt, frame, receiver, args):
    method = rt.engine.lookup(rt.behavior_anchor_of(receiver), rt.symbol_name(args[0]))
    return rt.nil_oop if method is None else HostValue("method", method)


@builtin("perform")
def _perform(rt, frame, receiver, args):
    return rt.engine.send_by_selector(receiver, rt.symbol_name(args[0]), [])


@builtin("performWith")
def _perform_with(rt, frame, receiver, args):
    return rt.engine.send_by_selector(receiver, rt.symbol_name(args[0]), [args[1]])


# -- SmallInteger -------------------------------------------------------------------

def _smi_binary(name, op):
    @builtin(name)
    def fn(rt, frame, receiver, args, _op=op):
        a = untag_small_integer(receiver)
        arg = args[0]
        if not (isinstance(arg, int) and arg & 1):
            _dnu(rt, receiver, name)
        result = _op(a, untag_small_integer(arg))
        if SMI_MIN <= result <= SMI_MAX:
            return tag_small_integer(result)
        return rt.box_large(result)
    return fn


_smi_binary("smiSub", lambda a, b: a - b)
_smi_binary("smiMul", lambda a, b: a * b)
_smi_binary("smiBitAnd", lambda a, b: a & b)
_smi_binary("smiBitOr", lambda a, b: a | b)
_smi_binary("smiBitXor", lambda a, b: a ^ b)


@builtin("smiDiv")
def _smi_div(rt, frame, receiver, args):
    b = _smi(rt, args[0], "//")
    if b == 0:
        raise HostedError("division by zero")
    return tag_small_integer(untag_small_integer(receiver) // b)


@builtin("smiMod")
def _smi_mod(rt, frame, receiver, args):
    b = _smi(rt, args[0], "\\\\")
    if b == 0:
        raise HostedError("division by zero")
    return tag_small_integer(untag_small_integer(receiver) % b)


@builtin("smiDivide")
def _smi_divide(rt, frame, receiver, args):
    """Exact quotient stays a SmallInteger; otherwise a Float."""
    b = _smi(rt, args[0], "/")
    if b == 0:
        raise HostedError("division by zero")
    a = untag_small_integer(receiver)
    if a % b == 0:
        return tag_small_integer(a // b)
    return rt.box_float(a / b)


@builtin("smiBitShift")
def _smi_bit_shift(rt, frame, receiver, args):
    amount = _smi(rt, args[0], "bitShift:")
    a = untag_small_integer(receiver)
    result = a << amount if amount >= 0 else a >> (-amount)
    if SMI_MIN <= result <= SMI_MAX:
        return tag_small_integer(result)
    return rt.box_large(result)


@builtin("smiBitInvert")
def _smi_bit_invert(rt, frame, receiver, args):
    return tag_small_integer(~untag_small_integer(receiver))


def _smi_compare(name, op):
    @builtin(name)
    def fn(rt, frame, receiver, args, _op=op):
        arg = args[0]
        if not (isinstance(arg, int) and arg & 1):
            if name == "smiEq":
                return rt.false_oop
            if name == "smiNe":
                return rt.true_oop
            _dnu(rt, receiver, name)
        return _bool(rt, _op(untag_small_integer(receiver), untag_small_integer(arg)))
    return fn


_smi_compare("smiLt", lambda a, b: a < b)
_smi_compare("smiLe", lambda a, b: a <= b)
_smi_compare("smiGt", lambda a, b: a > b)
_smi_compare("smiGe", lambda a, b: a >= b)
_smi_compare("smiEq", lambda a, b: a == b)
_smi_compare("smiNe", lambda a, b: a != b)


@builtin("smiAsFloat")
def _smi_as_float(rt, frame, receiver, args):
    return rt.box_float(float(untag_small_integer(receiver)))


@builtin("smiAsLargeInteger")
def _smi_as_large(rt, frame, receiver, args):
    return rt.box_large(untag_small_integer(receiver))


@builtin("smiPrintString")
def _smi_print(rt, frame, receiver, args):
    return rt.make_string(str(untag_small_integer(receiver)))


# -- LargeInteger (boxed 64-bit signed) -------------------------------------------------

def _int_value(rt, oop):
    if isinstance(oop, int) and oop & 1:
        return untag_small_integer(oop)
    if isinstance(oop, int) and rt.is_instance_of(oop, "LargeInteger"):
        return rt.large_value(oop)
    return None


@builtin("largePlus")
def _large_plus(rt, frame, receiver, args):
    b = _int_value(rt, args[0])
    if b is None:
        _dnu(rt, receiver, "+")
    result = rt.large_value(receiver) + b
    if result < I64_MIN or result > I64_MAX:
        raise ArithmeticOverflow("sum exceeds the 64-bit signed range")
    return rt.box_large(result)


@builtin("largeMinus")
def _large_minus(rt, frame, receiver, args):
    b = _int_value(rt, args[0])
    if b is None:
        _dnu(rt, receiver, "-")
    result = rt.large_value(receiver) - b
    if result < I64_MIN or result > I64_MAX:
        raise ArithmeticOverflow("difference exceeds the 64-bit signed range")
    return rt.box_large(result)


@builtin("largeTimes")
def _large_times(rt, frame, receiver, args):
    b = _int_value(rt, args[0])
    if b is None:
        _dnu(rt, receiver, "*")
    result = rt.large_value(receiver) * b
    if result < I64_MIN or result > I64_MAX:
        raise ArithmeticOverflow("product exceeds the 64-bit signed range")
    return rt.box_large(result)


@builtin("largeEq")
def _large_eq(rt, frame, receiver, args):
    b = _int_value(rt, args[0])
    return _bool(rt, b is not None and rt.large_value(receiver) == b)


@builtin("largeLt")
def _large_lt(rt, frame, receiver, args):
    b = _int_value(rt, args[0])
    if b is None:
        _dnu(rt, receiver, "<")
    return _bool(rt, rt.large_value(receiver) < b)


@builtin("largePrintString")
def _large_print(rt, frame, receiver, args):
    return rt.make_string(str(rt.large_value(receiver)))


@builtin("largeAsInteger")
def _large_as_integer(rt, frame, receiver, args):
    v = rt.large_value(receiver)
    if SMI_MIN <= v <= SMI_MAX:
        return tag_small_integer(v)
    return receiver


# -- Float -----------------------------------------------------------------------------

def _float_operand(rt, oop):
    if isinstance(oop, int) and oop & 1:
        return float(untag_small_integer(oop))
    if isinstance(oop, int) and rt.is_instance_of(oop, "Float"):
        return rt.float_value(oop)
    return None


def _float_binary(name, op):
    @builtin(name)
    def fn(rt, frame, receiver, args, _op=op):
        b = _float_operand(rt, args[0])
        if b is None:
            _dnu(rt, receiver, name)
        return rt.box_float(_op(rt.float_value(receiver), b))
    return fn


_float_binary("floatPlus", lambda a, b: a + b)
_float_binary("floatMinus", lambda a, b: a - b)
_float_binary("floatTimes", lambda a, b: a * b)


@builtin("floatDivide")
def _float_divide(rt, frame, receiver, args):
    b = _float_operand(rt, args[0])
    if b is None:
        _dnu(rt, receiver, "/")
    if b == 0.0:
        raise HostedError("division by zero")
    return rt.box_float(rt.float_value(receiver) / b)


def _float_compare(name, op):
    @builtin(name)
    def fn(rt, frame, receiver, args, _op=op):
        b = _float_operand(rt, args[0])
        if b is None:
            if name == "floatEq":
                return rt.false_oop
            _dnu(rt, receiver, name)
        return _bool(rt, _op(rt.float_value(receiver), b))
    return fn


_float_compare("floatLt", lambda a, b: a < b)
_float_compare("floatLe", lambda a, b: a <= b)
_float_compare("floatGt", lambda a, b: a > b)
_float_compare("floatGe", lambda a, b: a >= b)
_float_compare("floatEq", lambda a, b: a == b)


@builtin("floatAsInteger")
def _float_as_integer(rt, frame, receiver, args):
    return tag_small_integer(int(rt.float_value(receiver)))


@builtin("floatPrintString")
def _float_print(rt, frame, receiver, args):
    return rt.make_string(repr(rt.float_value(receiver)))


@builtin("floatNegated")
def _float_negated(rt, frame, receiver, args):
    return rt.box_float(-rt.float_value(receiver))


# -- behaviors (class-side) ---------------------------------------------------------------

@builtin("behaviorNew")
def _behavior_new(rt, frame, receiver, args):
    return rt.instantiate(receiver)


@builtin("behaviorNewSized")
def _behavior_new_sized(rt, frame, receiver, args):
    return rt.instantiate_sized(receiver, _smi(rt, args[0], "new:"))


@builtin("behaviorName")
def _behavior_name(rt, frame, receiver, args):
    b = rt.behavior_of_class_oop(receiver)
    return rt.make_string(b.name)


# -- String / Symbol ---------------------------------------------------------------------

@builtin("stringAt")
def _string_at(rt, frame, receiver, args):
    i = _smi(rt, args[0], "at:")
    size = rt.heap.object_size(receiver)
    if i < 1 or i > size:
        raise IndexOutOfBounds("index %d of %d" % (i, size))
    return tag_small_integer(rt.heap.byte_at(receiver, i))


@builtin("stringAtPut")
def _string_at_put(rt, frame, receiver, args):
    i = _smi(rt, args[0], "at:put:")
    size = rt.heap.object_size(receiver)
    if i < 1 or i > size:
        raise IndexOutOfBounds("index %d of %d" % (i, size))
    rt.heap.byte_at_put(receiver, i, _smi(rt, args[1], "at:put:"))
    return args[1]


@builtin("stringConcat")
def _string_concat(rt, frame, receiver, args):
    a = rt.string_value(receiver)
    b = rt.string_value(args[0])
    return rt.make_string(a + b)


@builtin("stringEq")
def _string_eq(rt, frame, receiver, args):
    other = args[0]
    if not (isinstance(other, int) and not other & 1 and other and
            rt.is_kind_of_name(other, ("String", "Symbol"))):
        return rt.false_oop
    return _bool(rt, rt.string_value(receiver) == rt.string_value(other))


@builtin("stringPrintString")
def _string_print(rt, frame, receiver, args):
    return rt.make_string("'%s'" % rt.string_value(receiver).replace("'", "''"))


@builtin("stringAsSymbol")
def _string_as_symbol(rt, frame, receiver, args):
    return rt.intern(rt.string_value(receiver))


@builtin("symbolPrintString")
def _symbol_print(rt, frame, receiver, args):
    return rt.make_string("#" + rt.string_value(receiver))


@builtin("symbolAsString")
def _symbol_as_string(rt, frame, receiver, args):
    return rt.make_string(rt.string_value(receiver))


@builtin("symbolValueWith")
def _symbol_value_with(rt, frame, receiver, args):
    return rt.engine.send_by_selector(args[0], rt.symbol_name(receiver), [])


# -- Array -----------------------------------------------------------------------------------

@builtin("arrayAt")
def _array_at(rt, frame, receiver, args):
    i = _smi(rt, args[0], "at:")
    size = rt.heap.object_size(receiver)
    if i < 1 or i > size:
        raise IndexOutOfBounds("index %d of %d" % (i, size))
    return rt.heap.read_slot(receiver, i)


@builtin("arrayAtPut")
def _array_at_put(rt, frame, receiver, args):
    i = _smi(rt, args[0], "at:put:")
    rt.heap.write_barrier_store(receiver, i, args[1])
    return args[1]


@builtin("arrayBeWeak")
def _array_be_weak(rt, frame, receiver, args):
    rt.heap.register_weak(receiver)
    return receiver


@builtin("arrayDropWeak")
def _array_drop_weak(rt, frame, receiver, args):
    rt.heap.unregister_weak(receiver)
    return receiver


# -- ByteArray ---------------------------------------------------------------------------------

@builtin("bytesAt")
def _bytes_at(rt, frame, receiver, args):
    return _string_at(rt, frame, receiver, args)


@builtin("bytesAtPut")
def _bytes_at_put(rt, frame, receiver, args):
    return _string_at_put(rt, frame, receiver, args)


# -- BlockClosure --------------------------------------------------------------------------------

@builtin("blockNumArgs")
def _block_num_args(rt, frame, receiver, args):
    method = rt.closure_method(receiver)
    return tag_small_integer(method.arg_count)


def _block_value(rt, frame, receiver, args):
    method = rt.closure_method(receiver)
    if method.arg_count != len(args):
        raise HostedError("block expects %d arguments, got %d"
                          % (method.arg_count, len(args)))
    heap = rt.heap
    captured = [heap.read_slot(receiver, 3 + i) for i in range(method.capture_count)]
    home_receiver = heap.read_slot(receiver, 2)
    code = rt.engine.native_code_for(method)
    return rt.engine.execute(code, home_receiver, list(args) + captured)


@builtin("blockValue")
def _block_value0(rt, frame, receiver, args):
    return _block_value(rt, frame, receiver, [])


@builtin("blockValue1")
def _block_value1(rt, frame, receiver, args):
    return _block_value(rt, frame, receiver, [args[0]])


@builtin("blockValue2")
def _block_value2(rt, frame, receiver, args):
    return _block_value(rt, frame, receiver, [args[0], args[1]])


@builtin("blockValue3")
def _block_value3(rt, frame, receiver, args):
    return _block_value(rt, frame, receiver, [args[0], args[1], args[2]])


# -- Memory and spaces -----------------------------------------------------------------------------

@builtin("memCollectYoung")
def _mem_collect_young(rt, frame, receiver, args):
    rt.memory.collect_young()
    return receiver


@builtin("memCollectFull")
def _mem_collect_full(rt, frame, receiver, args):
    rt.memory.collect_full()
    return receiver


@builtin("memDisableGC")
def _mem_disable(rt, frame, receiver, args):
    rt.memory.disable_gc()
    return receiver


@builtin("memEnableGC")
def _mem_enable(rt, frame, receiver, args):
    rt.memory.enable_gc()
    return receiver


@builtin("memGcStats")
def _mem_gc_stats(rt, frame, receiver, args):
    return HostValue("statslog", rt.memory)


@builtin("memLastFullLiveBytes")
def _mem_last_full(rt, frame, receiver, args):
    return tag_small_integer(rt.memory.last_full_live)


@builtin("memOldLiveEstimate")
def _mem_old_live(rt, frame, receiver, args):
    return tag_small_integer(rt.memory.old_live_estimate)


@builtin("memGrowthFactor")
def _mem_growth_factor(rt, frame, receiver, args):
    return rt.box_float(rt.memory.config.growth_factor)


@builtin("memInitialFullThreshold")
def _mem_initial_threshold(rt, frame, receiver, args):
    return tag_small_integer(rt.memory.config.initial_full_threshold)


@builtin("memEvacuationThreshold")
def _mem_evac_threshold(rt, frame, receiver, args):
    return rt.box_float(rt.memory.config.evacuation_usage_threshold)


@builtin("memEvacuationBudget")
def _mem_evac_budget(rt, frame, receiver, args):
    config = rt.memory.config
    return tag_small_integer(config.evacuation_budget or rt.memory.auto_budget())


@builtin("spaceName")
def _space_name(rt, frame, receiver, args):
    role = rt.space_role_of(receiver)
    return rt.make_string(role)


@builtin("spaceUsedBytes")
def _space_used(rt, frame, receiver, args):
    space = rt.space_for_role(rt.space_role_of(receiver))
    return tag_small_integer(space.used)


@builtin("spaceObjectsDo")
def _space_objects_do(rt, frame, receiver, args):
    """Snapshot the space's objects, then evaluate the block for each.

    The snapshot lives on this frame's operand stack so a collection
    triggered by the block keeps every pending reference current.
    """
    space = rt.space_for_role(rt.space_role_of(receiver))
    snapshot = list(rt.heap.objects_in(space))
    base = len(frame.ostack)
    frame.ostack.extend(snapshot)
    count = len(snapshot)
    for i in range(count):
        oop = frame.ostack[base + i]
        rt.engine.send_by_selector(frame.args[0], "value:", [oop])
    del frame.ostack[base:base + count]
    return receiver


# -- EdenCollector support ---------------------------------------------------------------------------

@builtin("collectorBasicCopy")
def _collector_basic_copy(rt, frame, receiver, args):
    """Clone an object into the current to-space, aging it by one."""
    heap = rt.heap
    oop = args[0]
    units = heap.object_size(oop)
    flags = heap.flags_of(oop)
    bytes_flag = bool(flags & 0x10)
    age = min(heap.age_of(oop) + 1, 3)
    copy = heap._place(heap.to_space, units, units if bytes_flag else units * 8,
                       heap.behavior_of(oop), bytes_flag, age)
    body = heap.body_bytes(oop)
    heap.mem[copy + 16:copy + 16 + body] = heap.mem[oop + 16:oop + 16 + body]
    heap.mem[copy + 10:copy + 12] = heap.mem[oop + 10:oop + 12]
    return copy


# -- System ---------------------------------------------------------------------------------------------

@builtin("systemClearCodeCache")
def _system_clear_cache(rt, frame, receiver, args):
    rt.engine.clear_code_cache()
    return receiver


@builtin("systemMemory")
def _system_memory(rt, frame, receiver, args):
    return rt.memory_oop


@builtin("systemSimdEnabled")
def _system_simd(rt, frame, receiver, args):
    return _bool(rt, rt.simd_enabled)


# -- CompiledMethod -----------------------------------------------------------------------------------------

@builtin("methodHasNativeCode")
def _method_has_native(rt, frame, receiver, args):
    return _bool(rt, rt.engine.has_native_code(receiver.obj))


@builtin("methodSelector")
def _method_selector(rt, frame, receiver, args):
    return rt.intern(receiver.obj.selector)


@builtin("methodAllInstances")
def _method_all_instances(rt, frame, receiver, args):
    return HostValue("methodlist", list(rt.method_registry))


@builtin("methodListSize")
def _method_list_size(rt, frame, receiver, args):
    return tag_small_integer(len(receiver.obj))


@builtin("methodListCount")
def _method_list_count(rt, frame, receiver, args):
    block_or_symbol = args[0]
    if isinstance(block_or_symbol, int) and \
            rt.is_instance_of(block_or_symbol, "Symbol") and \
            rt.symbol_name(block_or_symbol) == "hasNativeCode":
        # bulk query against one consistent moment: counting must not be
        # perturbed by the machinery it compiles while it runs
        snapshot = {id(m) for m in rt.engine.cache.methods()
                    if rt.engine.has_native_code(m)}
        count = sum(1 for m in receiver.obj if id(m) in snapshot)
        return tag_small_integer(count)
    count = 0
    for m in receiver.obj:
        result = rt.engine.send_by_selector(
            block_or_symbol, "value:", [HostValue("method", m)])
        if result == rt.true_oop:
            count += 1
    return tag_small_integer(count)


# -- GC statistics views ----------------------------------------------------------------------------------------

@builtin("statsLogSize")
def _stats_log_size(rt, frame, receiver, args):
    return tag_small_integer(len(receiver.obj.pass_log))


@builtin("statsLogAt")
def _stats_log_at(rt, frame, receiver, args):
    i = _smi(rt, args[0], "at:")
    log = receiver.obj.pass_log
    if i < 1 or i > len(log):
        raise IndexOutOfBounds("pass %d of %d" % (i, len(log)))
    return HostValue("gcrecord", log[i - 1])


@builtin("statsLogLast")
def _stats_log_last(rt, frame, receiver, args):
    log = receiver.obj.pass_log
    if not log:
        return rt.nil_oop
    return HostValue("gcrecord", log[-1])


def _stats_field(name, attr, symbolic=False):
    @builtin(name)
    def fn(rt, frame, receiver, args):
        value = getattr(receiver.obj, attr)
        if symbolic:
            return rt.intern(value)
        if value is None:
            return rt.nil_oop
        return tag_small_integer(value)
    return fn


_stats_field("statsKind", "kind", symbolic=True)
_stats_field("statsStartTime", "start_time")
_stats_field("statsDurationMicros", "duration_micros")
_stats_field("statsBytesBefore", "bytes_before")
_stats_field("statsBytesAfter", "bytes_after")
_stats_field("statsSurvivorsBytes", "survivors_bytes")
_stats_field("statsTenuredBytes", "tenured_bytes")
_stats_field("statsTenuredCount", "tenured_count")
_stats_field("statsRememberedSetSize", "remembered_set_size")
_stats_field("statsEdenSize", "eden_size")
_stats_field("statsAreasEvacuated", "areas_evacuated")
