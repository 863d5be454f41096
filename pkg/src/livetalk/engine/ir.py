"""Executable IR.

A compiled method is a flat sequence of nodes executed in order against an
operand stack; nodes keep their operand subtrees for structural inspection
(rewrite tests, the pretty printer). Jump targets are indices into the
flat sequence.
"""

import struct as _struct

# node kinds
CONSTANT = 1
SELF_REF = 2
ARG_REF = 3
TEMP_REF = 4
TEMP_STORE = 5
POP = 6
LOAD = 7
STORE = 8
BIT_AND = 9
BIT_OR = 10
BIT_SHIFT = 11
NE_ZERO = 12
SMI_PLUS_OVF = 13
OVERFLOW_TEST = 14
FLOAT_PLUS = 15
SIMD_FLOAT_PLUS = 16
SEND = 17
SUPER_SEND = 18
STATIC_SEND = 19
JUMP = 20
BRANCH = 21
RETURN = 22
RETURN_SELF = 23
TRANSFER_CONTROL = 24
ADDRESS_OF_OBJECT = 25
OBJECT_AT_ADDRESS = 26
MAKE_CLOSURE = 27
HOST_SLOT = 28

KIND_NAMES = {
    CONSTANT: "Constant", SELF_REF: "SelfRef", ARG_REF: "ArgRef",
    TEMP_REF: "TempRef", TEMP_STORE: "TempStore", POP: "Pop",
    LOAD: "Load", STORE: "Store", BIT_AND: "BitAnd", BIT_OR: "BitOr",
    BIT_SHIFT: "BitShift", NE_ZERO: "NeZero", SMI_PLUS_OVF: "SmiPlusWithOverflow",
    OVERFLOW_TEST: "OverflowTest", FLOAT_PLUS: "FloatPlus",
    SIMD_FLOAT_PLUS: "SIMDFloatPlus", SEND: "Send", SUPER_SEND: "SuperSend",
    STATIC_SEND: "StaticSend", JUMP: "Jump", BRANCH: "Branch",
    RETURN: "Return", RETURN_SELF: "ReturnSelf",
    TRANSFER_CONTROL: "TransferControl", ADDRESS_OF_OBJECT: "AddressOfObject",
    OBJECT_AT_ADDRESS: "ObjectAtAddress", MAKE_CLOSURE: "MakeClosure",
    HOST_SLOT: "HostSlot",
}

# type tags for Load/Store
T_WORD = "Word"
T_BYTE = "Byte"
T_WORD32 = "Word32"
T_FLOAT32 = "Float32"
T_SIMD = "SIMDFloat32"


class IRNode:
    __slots__ = ("kind", "operands", "value", "index", "type_tag", "selector",
                 "argc", "site", "target", "jump_if", "fn", "block_info", "poll",
                 "unchecked")

    def __init__(self, kind, operands=(), value=None, index=None, type_tag=None,
                 selector=None, argc=0, site=None, target=None, jump_if=False,
                 fn=None, block_info=None, poll=False, unchecked=False):
        self.kind = kind
        self.operands = list(operands)
        self.value = value
        self.index = index
        self.type_tag = type_tag
        self.selector = selector
        self.argc = argc
        self.site = site
        self.target = target
        self.jump_if = jump_if
        self.fn = fn
        self.block_info = block_info
        self.poll = poll
        self.unchecked = unchecked

    def __repr__(self):
        return "<IR %s>" % sexpr(self)

    def walk(self):
        yield self
        for child in self.operands:
            yield from child.walk()


def sexpr(node, label=None):
    name = KIND_NAMES.get(node.kind, str(node.kind))
    parts = [name]
    if node.kind == CONSTANT:
        parts.append(label(node.value) if label else hex(node.value)
                     if isinstance(node.value, int) else repr(node.value))
    if node.type_tag:
        parts.append(node.type_tag)
    if node.index is not None:
        parts.append(str(node.index))
    if node.selector:
        parts.append("#" + node.selector)
    if node.fn is not None:
        parts.append(getattr(node.fn, "__name__", "fn"))
    if node.target is not None:
        parts.append("->%d" % node.target)
    if node.kind == BRANCH:
        parts.append("ifTrue" if node.jump_if else "ifFalse")
    for child in node.operands:
        parts.append(sexpr(child, label))
    return "(%s)" % " ".join(parts)


def print_code(code, label=None):
    """One flat node per line, s-expression style."""
    lines = []
    for i, node in enumerate(code.ops):
        lines.append("%4d %s" % (i, sexpr(node, label)))
    return "\n".join(lines)


def count_kind(code, kind):
    n = 0
    for node in code.ops:
        for sub in node.walk():
            if sub.kind == kind:
                n += 1
    return n


class ExecutableCode:
    """Engine-produced runnable form of a method."""

    __slots__ = ("origin", "ops", "statements", "invalidated", "builtin_fn",
                 "temp_count", "pinned")

    def __init__(self, origin, ops=None, statements=None, builtin_fn=None,
                 temp_count=0):
        self.origin = origin
        self.ops = ops or []
        self.statements = statements or []
        self.invalidated = False
        self.builtin_fn = builtin_fn
        self.temp_count = temp_count
        self.pinned = False

    def __repr__(self):
        return "<ExecutableCode %s%s>" % (self.origin, " (invalid)" if self.invalidated else "")


def f32(x):
    """Round a float to Float32 precision."""
    return _struct.unpack("<f", _struct.pack("<f", x))[0]
