"""Bytecode to executable IR.

Metamessage sends expand to IR compositions at this stage; registered
special messages (bitsAt:, bitsAt:put:) rewrite to shift/mask trees when
their field argument is a compile-time constant.
"""

import struct

from ..errors import CompileError, UnknownMetamessage
from ..frontend import compiler as bc
from ..objectmodel import (
    FLAGS_OFFSET, FLAG_SEEN, FLAG_SMALL, SMALL_SIZE_OFFSET, tag_small_integer,
)
from . import ir
from .ir import ExecutableCode, IRNode


def _tag(v):
    return tag_small_integer(v)


class Nativizer:
    def __init__(self, engine):
        self.engine = engine
        self.special_messages = {
            "bitsAt:": self._rewrite_bits_at,
            "bitsAt:put:": self._rewrite_bits_at_put,
        }

    # -- metamessage expansion ------------------------------------------------

    def expand_metamessage(self, selector, receiver, args):
        """Compose the IR for a metamessage; never produces a Send."""
        if selector == "_overflowed":
            return self._overflow_test(receiver, {})
        builder = _METAMESSAGES.get(selector)
        if builder is None:
            raise UnknownMetamessage("unknown metamessage #%s" % selector)
        expected = selector.count(":")
        if len(args) != expected:
            raise CompileError("#%s expects %d arguments" % (selector, expected))
        return builder(self, receiver, args)

    # -- special message rewrites ------------------------------------------------

    def rewrite_special_send(self, selector, receiver, args):
        """Return a rewritten tree, or None to emit the plain send."""
        handler = self.special_messages.get(selector)
        if handler is None:
            return None
        return handler(receiver, args)

    def _constant_bitfield(self, tree):
        if tree.kind != ir.CONSTANT:
            return None
        oop = tree.value
        rt = self.engine.rt
        if not rt.is_instance_of(oop, "BitField"):
            raise CompileError("bitsAt: constant argument is not a BitField")
        low = rt.read_int_slot(oop, 1)
        high = rt.read_int_slot(oop, 2)
        return low, high

    def _rewrite_bits_at(self, receiver, args):
        field = self._constant_bitfield(args[0])
        if field is None:
            return None
        low, high = field
        mask = ((1 << (high - low + 1)) - 1) << low
        masked = IRNode(ir.BIT_AND, [receiver, _const(_tag(mask))])
        return IRNode(ir.BIT_SHIFT, [masked, _const(_tag(-low))])

    def _rewrite_bits_at_put(self, receiver, args):
        field = self._constant_bitfield(args[0])
        if field is None:
            return None
        low, high = field
        mask = ((1 << (high - low + 1)) - 1) << low
        kept = IRNode(ir.BIT_AND, [receiver, _const(_tag(~mask))])
        shifted = IRNode(ir.BIT_SHIFT, [args[1], _const(_tag(low))])
        inserted = IRNode(ir.BIT_AND, [shifted, _const(_tag(mask))])
        return IRNode(ir.BIT_OR, [kept, inserted])

    # -- nativization ----------------------------------------------------------------

    def nativize(self, method, static=False):
        engine = self.engine
        code_bytes = method.bytecodes
        flat = []
        statements = []
        symstack = []
        mapping = {}
        fixups = []
        temp_trees = {}

        def flush(tree):
            statements.append(tree)
            for node in _postfix(tree):
                flat.append(node)

        i = 0
        n = len(code_bytes)
        while i < n:
            mapping[i] = len(flat)
            op = code_bytes[i]
            if op == bc.PUSH_SELF:
                symstack.append(IRNode(ir.SELF_REF))
            elif op == bc.PUSH_LIT:
                idx = struct.unpack_from("<H", code_bytes, i + 1)[0]
                symstack.append(_const(method.literals[idx]))
            elif op == bc.PUSH_TEMP:
                symstack.append(IRNode(ir.TEMP_REF, index=code_bytes[i + 1]))
            elif op == bc.STORE_TEMP:
                idx = code_bytes[i + 1]
                tree = symstack.pop()
                temp_trees[idx] = tree
                flush(IRNode(ir.TEMP_STORE, [tree], index=idx))
            elif op == bc.PUSH_ARG:
                symstack.append(IRNode(ir.ARG_REF, index=code_bytes[i + 1]))
            elif op == bc.PUSH_SLOT:
                slot = code_bytes[i + 1]
                owner = method.owner
                if owner is not None and getattr(owner, "host_backed", False):
                    name = owner.all_slot_names()[slot - 1]
                    symstack.append(IRNode(ir.HOST_SLOT, [IRNode(ir.SELF_REF)],
                                           selector=name))
                else:
                    symstack.append(_slot_load(IRNode(ir.SELF_REF), slot))
            elif op == bc.STORE_SLOT:
                owner = method.owner
                if owner is not None and getattr(owner, "host_backed", False):
                    raise CompileError("cannot assign slots of a host-backed class")
                value = symstack.pop()
                store = _slot_store(IRNode(ir.SELF_REF), code_bytes[i + 1], value)
                flush(store)
                flat.append(IRNode(ir.POP))
            elif op == bc.POP:
                tree = symstack.pop()
                if tree.kind not in (ir.TEMP_REF, ir.ARG_REF, ir.SELF_REF, ir.CONSTANT):
                    flush(tree)
                    flat.append(IRNode(ir.POP))
            elif op == bc.PUSH_GLOBAL:
                idx = struct.unpack_from("<H", code_bytes, i + 1)[0]
                assoc = method.literals[idx]
                if assoc in engine.rt.constant_globals:
                    symstack.append(_const(engine.rt.read_raw_slot(assoc, 2)))
                else:
                    symstack.append(_slot_load(_const(assoc), 2))
            elif op == bc.STORE_GLOBAL:
                idx = struct.unpack_from("<H", code_bytes, i + 1)[0]
                assoc = method.literals[idx]
                value = symstack.pop()
                flush(_slot_store(_const(assoc), 2, value))
                flat.append(IRNode(ir.POP))
            elif op in (bc.SEND, bc.SUPER_SEND, bc.META_SEND):
                sel_idx = struct.unpack_from("<H", code_bytes, i + 1)[0]
                argc = code_bytes[i + 3]
                selector = method.selectors[sel_idx]
                args = symstack[len(symstack) - argc:]
                del symstack[len(symstack) - argc:]
                receiver = symstack.pop()
                if op == bc.META_SEND:
                    if selector == "_overflowed":
                        symstack.append(self._overflow_test(receiver, temp_trees))
                    else:
                        symstack.append(self.expand_metamessage(selector, receiver, args))
                elif op == bc.SUPER_SEND:
                    node = IRNode(ir.SUPER_SEND, [receiver] + args,
                                  selector=selector, argc=argc,
                                  block_info=method.owner)
                    symstack.append(node)
                elif static:
                    fn = engine.static_bindings.get(selector)
                    if fn is None:
                        raise CompileError(
                            "no static binding for #%s in %s" % (selector, method.selector))
                    symstack.append(IRNode(ir.STATIC_SEND, [receiver] + args,
                                           selector=selector, argc=argc, fn=fn))
                else:
                    rewritten = self.rewrite_special_send(selector, receiver, args)
                    if rewritten is not None:
                        symstack.append(rewritten)
                    else:
                        site = engine.make_send_site(selector)
                        symstack.append(IRNode(ir.SEND, [receiver] + args,
                                               selector=selector, argc=argc, site=site))
            elif op in (bc.JUMP, bc.JUMP_FALSE, bc.JUMP_TRUE):
                delta = struct.unpack_from("<h", code_bytes, i + 1)[0]
                target = i + 3 + delta
                if op == bc.JUMP:
                    node = IRNode(ir.JUMP, poll=delta < 0)
                else:
                    cond = symstack.pop()
                    flush(cond)
                    node = IRNode(ir.BRANCH, jump_if=op == bc.JUMP_TRUE)
                flat.append(node)
                fixups.append((node, target))
            elif op == bc.RETURN_TOP:
                tree = symstack.pop()
                flush(IRNode(ir.RETURN, [tree]))
            elif op == bc.RETURN_SELF:
                flat.append(IRNode(ir.RETURN_SELF))
            elif op == bc.MAKE_CLOSURE:
                block_idx = code_bytes[i + 1]
                ncap = code_bytes[i + 2]
                block_method = method.block_methods[block_idx]
                engine.rt.register_method(block_method)
                caps = symstack[len(symstack) - ncap:]
                del symstack[len(symstack) - ncap:]
                symstack.append(IRNode(ir.MAKE_CLOSURE, caps,
                                       block_info=block_method, argc=ncap))
            else:
                raise CompileError("cannot nativize opcode %d" % op)
            i += bc.OP_LENGTHS[op]

        if symstack:
            raise CompileError("unbalanced stack nativizing %s" % method.selector)
        for node, target in fixups:
            if target not in mapping:
                raise CompileError("jump into the middle of a statement")
            node.target = mapping[target]
        return ExecutableCode(method, flat, statements, temp_count=method.temp_count)

    def _overflow_test(self, receiver, temp_trees):
        producer = receiver
        if producer.kind == ir.TEMP_REF:
            producer = temp_trees.get(producer.index)
        if producer is None or producer.kind != ir.SMI_PLUS_OVF:
            raise CompileError("_overflowed requires a _smiPlus: producer")
        node = IRNode(ir.OVERFLOW_TEST)
        node.operands = [producer]   # structural pairing; not re-executed
        return node


def _postfix(tree):
    if tree.kind == ir.OVERFLOW_TEST:
        # its operand is a structural link to an already-emitted producer
        yield tree
        return
    for child in tree.operands:
        yield from _postfix(child)
    yield tree


def _const(value):
    return IRNode(ir.CONSTANT, value=value)


def _slot_load(base, index):
    return IRNode(ir.LOAD, [base, _const(_tag(index))], type_tag=ir.T_WORD,
                  unchecked=True)


def _slot_store(base, index, value):
    return IRNode(ir.STORE, [base, _const(_tag(index)), value], type_tag=ir.T_WORD,
                  unchecked=True)


# -- the metamessage table --------------------------------------------------------

def _flags_load(receiver):
    return IRNode(ir.LOAD, [receiver, _const(_tag(FLAGS_OFFSET))], type_tag=ir.T_BYTE)


def _m_is_small(nv, r, a):
    masked = IRNode(ir.BIT_AND, [_flags_load(r), _const(_tag(FLAG_SMALL))])
    return IRNode(ir.NE_ZERO, [masked])


def _m_small_size(nv, r, a):
    return IRNode(ir.LOAD, [r, _const(_tag(SMALL_SIZE_OFFSET))], type_tag=ir.T_BYTE)


def _m_large_size(nv, r, a):
    return IRNode(ir.LOAD, [r, _const(_tag(-4))], type_tag=ir.T_WORD32)


def _m_has_been_seen(nv, r, a):
    masked = IRNode(ir.BIT_AND, [_flags_load(r), _const(_tag(FLAG_SEEN))])
    return IRNode(ir.NE_ZERO, [masked])


def _m_be_seen(nv, r, a):
    updated = IRNode(ir.BIT_OR, [_flags_load(r), _const(_tag(FLAG_SEEN))])
    return IRNode(ir.STORE, [r, _const(_tag(FLAGS_OFFSET)), updated], type_tag=ir.T_BYTE)


def _m_is_small_integer(nv, r, a):
    masked = IRNode(ir.BIT_AND, [r, _const(1)])     # raw low tag bit
    return IRNode(ir.NE_ZERO, [masked], unchecked=True)


def _m_smi_plus(nv, r, a):
    return IRNode(ir.SMI_PLUS_OVF, [r, a[0]])


def _m_as_object(nv, r, a):
    return IRNode(ir.OBJECT_AT_ADDRESS, [r])


def _m_as_address(nv, r, a):
    return IRNode(ir.ADDRESS_OF_OBJECT, [r])


def _m_basic_at(nv, r, a):
    return IRNode(ir.LOAD, [r, a[0]], type_tag=ir.T_WORD, unchecked=True)


def _m_basic_at_put(nv, r, a):
    return IRNode(ir.STORE, [r, a[0], a[1]], type_tag=ir.T_WORD, unchecked=True)


def _m_transfer_control(nv, r, a):
    return IRNode(ir.TRANSFER_CONTROL, [r, a[0]])


def _m_float_at(nv, r, a):
    return IRNode(ir.LOAD, [r, a[0]], type_tag=ir.T_FLOAT32)


def _m_float_at_put(nv, r, a):
    return IRNode(ir.STORE, [r, a[0], a[1]], type_tag=ir.T_FLOAT32)


def _m_float_plus(nv, r, a):
    return IRNode(ir.FLOAT_PLUS, [r, a[0]])


def _m_simd_at(nv, r, a):
    return IRNode(ir.LOAD, [r, a[0]], type_tag=ir.T_SIMD)


def _m_simd_at_put(nv, r, a):
    return IRNode(ir.STORE, [r, a[0], a[1]], type_tag=ir.T_SIMD)


def _m_simd_plus(nv, r, a):
    return IRNode(ir.SIMD_FLOAT_PLUS, [r, a[0]])


_METAMESSAGES = {
    "_isSmall": _m_is_small,
    "_smallSize": _m_small_size,
    "_largeSize": _m_large_size,
    "_hasBeenSeen": _m_has_been_seen,
    "_beSeen": _m_be_seen,
    "_isSmallInteger": _m_is_small_integer,
    "_smiPlus:": _m_smi_plus,
    "_overflowed": None,  # handled inline; needs the producing node
    "_asObject": _m_as_object,
    "_asAddress": _m_as_address,
    "_basicAt:": _m_basic_at,
    "_basicAt:put:": _m_basic_at_put,
    "_transferControlTo:": _m_transfer_control,
    "_floatAt:": _m_float_at,
    "_floatAt:put:": _m_float_at_put,
    "_floatPlus:": _m_float_plus,
    "_simdFloatAt:": _m_simd_at,
    "_simdFloatAt:put:": _m_simd_at_put,
    "_simdFloatPlus:": _m_simd_plus,
}

METAMESSAGE_SELECTORS = frozenset(_METAMESSAGES)
