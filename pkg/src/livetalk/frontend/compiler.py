"""AST to stack bytecode.

Control-flow keyword messages with literal block arguments compile to
jumps; every other block literal becomes a closure-creation instruction.
Metamessage sends get their own instruction so the execution engine can
expand them without re-inspecting selector spellings.
"""

import itertools
import struct

from ..errors import CompileError, NonLocalReturnUnsupported
from .astnodes import Assign, Block, Cascade, Ident, Literal, Method, Return, Send, SymbolLiteral

# opcodes
PUSH_SELF = 1
PUSH_LIT = 2       # u16 literal index
PUSH_TEMP = 3      # u8
STORE_TEMP = 4     # u8, pops
PUSH_ARG = 5       # u8
PUSH_SLOT = 6      # u8 (1-based slot)
STORE_SLOT = 7     # u8, pops
POP = 8
SEND = 10          # u16 selector index, u8 argc
SUPER_SEND = 11
META_SEND = 12
JUMP = 13          # i16 relative to next instruction
JUMP_FALSE = 14
JUMP_TRUE = 15
RETURN_TOP = 16
RETURN_SELF = 17
MAKE_CLOSURE = 18  # u8 block index, u8 capture count (captures pushed first)
PUSH_GLOBAL = 19   # u16 literal index of the global association
STORE_GLOBAL = 20  # u16, pops

OP_LENGTHS = {
    PUSH_SELF: 1, PUSH_LIT: 3, PUSH_TEMP: 2, STORE_TEMP: 2, PUSH_ARG: 2,
    PUSH_SLOT: 2, STORE_SLOT: 2, POP: 1, SEND: 4, SUPER_SEND: 4, META_SEND: 4,
    JUMP: 3, JUMP_FALSE: 3, JUMP_TRUE: 3, RETURN_TOP: 1, RETURN_SELF: 1,
    MAKE_CLOSURE: 3, PUSH_GLOBAL: 3, STORE_GLOBAL: 3,
}

OP_NAMES = {v: k for k, v in list(globals().items()) if k.isupper() and isinstance(v, int)}

_method_ids = itertools.count(1)


class BytecodeMethod:
    """Compiled hosted method: bytecodes, literals, selector, owner."""

    def __init__(self, selector, owner=None):
        self.selector = selector
        self.owner = owner
        self.bytecodes = b""
        self.literals = []
        self.selectors = []
        self.block_methods = []
        self.arg_count = 0
        self.temp_count = 0
        self.capture_count = 0
        self.uses_metamessages = False
        self.is_block = False
        self.transient = False
        self.builtin = None
        self.pragmas = []
        self.source = None
        self.static_bind = False
        self.method_id = next(_method_ids)

    def __repr__(self):
        owner = getattr(self.owner, "name", self.owner)
        return "<BytecodeMethod %s>>%s>" % (owner, self.selector)

    def disassemble(self):
        out = []
        i = 0
        bc = self.bytecodes
        while i < len(bc):
            op = bc[i]
            name = OP_NAMES.get(op, "?%d" % op)
            length = OP_LENGTHS[op]
            args = ""
            if op in (PUSH_LIT, PUSH_GLOBAL, STORE_GLOBAL):
                args = " %d" % struct.unpack_from("<H", bc, i + 1)[0]
            elif op in (SEND, SUPER_SEND, META_SEND):
                sel = struct.unpack_from("<H", bc, i + 1)[0]
                args = " #%s argc=%d" % (self.selectors[sel], bc[i + 3])
            elif op in (JUMP, JUMP_FALSE, JUMP_TRUE):
                delta = struct.unpack_from("<h", bc, i + 1)[0]
                args = " -> %d" % (i + length + delta)
            elif length > 1:
                args = " " + " ".join(str(b) for b in bc[i + 1:i + length])
            out.append("%4d %s%s" % (i, name, args))
            i += length
        return "\n".join(out)


class _Assembler:
    def __init__(self):
        self.code = bytearray()
        self.fixups = []  # (position, label)
        self.labels = {}

    def emit(self, op, *operands):
        self.code.append(op)
        for kind, value in operands:
            if kind == "u8":
                if not 0 <= value <= 0xFF:
                    raise CompileError("operand out of byte range: %d" % value)
                self.code.append(value)
            elif kind == "u16":
                self.code += struct.pack("<H", value)

    def jump(self, op, label):
        self.code.append(op)
        self.fixups.append((len(self.code), label))
        self.code += b"\x00\x00"

    def here(self, label):
        self.labels[label] = len(self.code)

    def finish(self):
        for pos, label in self.fixups:
            delta = self.labels[label] - (pos + 2)
            struct.pack_into("<h", self.code, pos, delta)
        return bytes(self.code)


class _Scope:
    """Name resolution for one method or block body."""

    def __init__(self, params, temps, slots, parent=None):
        self.params = list(params)
        self.temps = list(temps)
        self.slots = list(slots)
        self.parent = parent
        self.captures = []       # (name, parent access) for block scopes
        self.overlays = []       # inlined-block bindings: {name: ('temp', i)}

    def add_hidden_temp(self):
        self.temps.append("`t%d" % len(self.temps))
        return len(self.temps) - 1

    def resolve(self, name):
        for overlay in reversed(self.overlays):
            if name in overlay:
                return overlay[name]
        if name in self.params:
            return ("arg", self.params.index(name))
        if name in self.temps:
            return ("temp", self.temps.index(name))
        if self.parent is not None:
            outer = self.parent.resolve(name)
            # slots read through the captured receiver; globals stay global
            if outer is not None and outer[0] not in ("global", "slot"):
                for i, (n, _) in enumerate(self.captures):
                    if n == name:
                        return ("capture", i)
                self.captures.append((name, outer))
                return ("capture", len(self.captures) - 1)
            return outer
        if name in self.slots:
            return ("slot", self.slots.index(name) + 1)
        return ("global", name)


class PlainLiterals:
    """Literal factory used when no runtime is attached (tests, dry runs)."""

    def integer(self, v):
        return ("int", v)

    def float(self, v):
        return ("float", v)

    def string(self, v):
        return ("str", v)

    def symbol(self, v):
        return ("sym", v)

    def array(self, items):
        return ("array", tuple(items))

    def boolean(self, v):
        return ("bool", v)

    def nil(self):
        return ("nil",)

    def global_ref(self, name):
        return ("global", name)


class _MethodCompiler:
    def __init__(self, literals, slots):
        self.literals = literals or PlainLiterals()
        self.slots = slots or []
        self._closure_depth = 0

    def compile(self, ast, owner=None, transient=False):
        method = BytecodeMethod(ast.selector, owner)
        method.arg_count = len(ast.params)
        method.pragmas = list(ast.pragmas)
        method.source = ast.source
        method.transient = transient
        for pragma in ast.pragmas:
            if pragma.selector == "builtin:" and len(pragma.parts) > 1:
                method.builtin = pragma.parts[1].lstrip("#")
        scope = _Scope(ast.params, ast.temps, self.slots)
        asm = _Assembler()
        self._body(asm, scope, method, ast.body, is_method=True)
        method.bytecodes = asm.finish()
        method.temp_count = len(scope.temps)
        return method

    def compile_block(self, block, outer_scope, outer_method):
        method = BytecodeMethod("[] in %s" % outer_method.selector, outer_method.owner)
        method.is_block = True
        method.arg_count = len(block.params)
        method.transient = outer_method.transient
        scope = _Scope(block.params, block.temps, self.slots, parent=outer_scope)
        asm = _Assembler()
        self._closure_depth += 1
        try:
            self._block_body(asm, scope, method, block.body)
        finally:
            self._closure_depth -= 1
        # captures resolved during body compilation become trailing args
        method.capture_count = len(scope.captures)
        method.bytecodes = asm.finish()
        method.temp_count = len(scope.temps)
        return method, scope.captures

    # -- statement sequences -------------------------------------------------

    def _body(self, asm, scope, method, stmts, is_method):
        for stmt in stmts:
            self._statement(asm, scope, method, stmt)
        asm.emit(RETURN_SELF)

    def _block_body(self, asm, scope, method, stmts):
        if not stmts:
            asm.emit(PUSH_LIT, ("u16", self._literal(method, None)))
            asm.emit(RETURN_TOP)
            return
        for stmt in stmts[:-1]:
            self._statement(asm, scope, method, stmt)
        last = stmts[-1]
        if isinstance(last, Return):
            raise NonLocalReturnUnsupported(
                "return inside a non-inlined block (in %s)" % method.selector)
        self._expression(asm, scope, method, last)
        asm.emit(RETURN_TOP)

    def _statement(self, asm, scope, method, stmt):
        if isinstance(stmt, Return):
            if self._closure_depth > 0:
                raise NonLocalReturnUnsupported(
                    "return would escape a non-inlined block (in %s)" % method.selector)
            self._expression(asm, scope, method, stmt.value)
            asm.emit(RETURN_TOP)
            return
        if isinstance(stmt, Assign):
            self._expression(asm, scope, method, stmt.value)
            self._store(asm, scope, method, stmt.name, keep=False)
            return
        self._expression(asm, scope, method, stmt)
        asm.emit(POP)

    # -- expressions --------------------------------------------------------------

    def _expression(self, asm, scope, method, node):
        if isinstance(node, Literal):
            asm.emit(PUSH_LIT, ("u16", self._literal(method, node.value)))
        elif isinstance(node, Ident):
            self._load(asm, scope, method, node)
        elif isinstance(node, Assign):
            self._expression(asm, scope, method, node.value)
            self._store(asm, scope, method, node.name, keep=True)
        elif isinstance(node, Send):
            self._send(asm, scope, method, node)
        elif isinstance(node, Cascade):
            self._cascade(asm, scope, method, node)
        elif isinstance(node, Block):
            self._closure(asm, scope, method, node)
        elif isinstance(node, Return):
            raise CompileError("return is not an expression")
        else:
            raise CompileError("cannot compile %r" % (node,))

    def _load(self, asm, scope, method, node):
        name = node.name
        if name == "self" or name == "super":
            asm.emit(PUSH_SELF)
            return
        kind, value = _access(scope.resolve(name))
        if kind == "arg":
            asm.emit(PUSH_ARG, ("u8", value))
        elif kind == "temp":
            asm.emit(PUSH_TEMP, ("u8", value))
        elif kind == "capture":
            asm.emit(PUSH_ARG, ("u8", len(scope.params) + value))
        elif kind == "slot":
            asm.emit(PUSH_SLOT, ("u8", value))
        else:
            idx = self._add_literal(method, self.literals.global_ref(name))
            asm.emit(PUSH_GLOBAL, ("u16", idx))

    def _store(self, asm, scope, method, name, keep):
        kind, value = _access(scope.resolve(name))
        if kind == "arg":
            raise CompileError("cannot assign to parameter %r" % name)
        if kind == "capture":
            raise CompileError("cannot assign to captured variable %r" % name)
        if kind == "temp":
            asm.emit(STORE_TEMP, ("u8", value))
            if keep:
                asm.emit(PUSH_TEMP, ("u8", value))
        elif kind == "slot":
            asm.emit(STORE_SLOT, ("u8", value))
            if keep:
                asm.emit(PUSH_SLOT, ("u8", value))
        else:
            idx = self._add_literal(method, self.literals.global_ref(name))
            asm.emit(STORE_GLOBAL, ("u16", idx))
            if keep:
                asm.emit(PUSH_GLOBAL, ("u16", idx))

    def _cascade(self, asm, scope, method, node):
        holder = scope.add_hidden_temp()
        self._expression(asm, scope, method, node.receiver)
        asm.emit(STORE_TEMP, ("u8", holder))
        for i, (selector, args) in enumerate(node.messages):
            asm.emit(PUSH_TEMP, ("u8", holder))
            for arg in args:
                self._expression(asm, scope, method, arg)
            self._emit_send(asm, method, SEND, selector, len(args))
            if i < len(node.messages) - 1:
                asm.emit(POP)

    def _closure(self, asm, scope, method, block):
        sub, captures = self.compile_block(block, scope, method)
        method.block_methods.append(sub)
        index = len(method.block_methods) - 1
        for _, outer in captures:
            self._push_access(asm, scope, outer)
        asm.emit(MAKE_CLOSURE, ("u8", index), ("u8", len(captures)))

    def _push_access(self, asm, scope, access):
        kind, value = _access(access)
        if kind == "self":
            asm.emit(PUSH_SELF)
        elif kind == "arg":
            asm.emit(PUSH_ARG, ("u8", value))
        elif kind == "temp":
            asm.emit(PUSH_TEMP, ("u8", value))
        elif kind == "capture":
            asm.emit(PUSH_ARG, ("u8", len(scope.params) + value))
        elif kind == "slot":
            asm.emit(PUSH_SLOT, ("u8", value))
        else:
            raise CompileError("cannot capture %r" % (access,))

    # -- sends and inlined control flow -------------------------------------------

    def _send(self, asm, scope, method, node):
        if self._try_inline(asm, scope, method, node):
            return
        self._expression(asm, scope, method, node.receiver)
        for arg in node.args:
            self._expression(asm, scope, method, arg)
        if node.is_meta:
            method.uses_metamessages = True
            self._emit_send(asm, method, META_SEND, node.selector, len(node.args))
        elif node.is_super:
            self._emit_send(asm, method, SUPER_SEND, node.selector, len(node.args))
        else:
            self._emit_send(asm, method, SEND, node.selector, len(node.args))

    def _emit_send(self, asm, method, op, selector, argc):
        if selector in method.selectors:
            idx = method.selectors.index(selector)
        else:
            method.selectors.append(selector)
            idx = len(method.selectors) - 1
        asm.emit(op, ("u16", idx), ("u8", argc))

    def _try_inline(self, asm, scope, method, node):
        sel = node.selector
        args = node.args
        label = _labels()
        if sel in ("ifTrue:", "ifFalse:") and len(args) == 1 and isinstance(args[0], Block) \
                and not args[0].params:
            holder = scope.add_hidden_temp()
            self._expression(asm, scope, method, node.receiver)
            asm.jump(JUMP_FALSE if sel == "ifTrue:" else JUMP_TRUE, label("else"))
            self._inline_block(asm, scope, method, args[0])
            asm.emit(STORE_TEMP, ("u8", holder))
            asm.jump(JUMP, label("end"))
            asm.here(label("else"))
            asm.emit(PUSH_LIT, ("u16", self._literal(method, None)))
            asm.emit(STORE_TEMP, ("u8", holder))
            asm.here(label("end"))
            asm.emit(PUSH_TEMP, ("u8", holder))
            return True
        if sel in ("ifTrue:ifFalse:", "ifFalse:ifTrue:") and len(args) == 2 and \
                all(isinstance(a, Block) and not a.params for a in args):
            then_block, else_block = args if sel == "ifTrue:ifFalse:" else (args[1], args[0])
            holder = scope.add_hidden_temp()
            self._expression(asm, scope, method, node.receiver)
            asm.jump(JUMP_FALSE, label("else"))
            self._inline_block(asm, scope, method, then_block)
            asm.emit(STORE_TEMP, ("u8", holder))
            asm.jump(JUMP, label("end"))
            asm.here(label("else"))
            self._inline_block(asm, scope, method, else_block)
            asm.emit(STORE_TEMP, ("u8", holder))
            asm.here(label("end"))
            asm.emit(PUSH_TEMP, ("u8", holder))
            return True
        if sel in ("and:", "or:") and len(args) == 1 and isinstance(args[0], Block) \
                and not args[0].params:
            holder = scope.add_hidden_temp()
            self._expression(asm, scope, method, node.receiver)
            asm.jump(JUMP_FALSE if sel == "and:" else JUMP_TRUE, label("short"))
            self._inline_block(asm, scope, method, args[0])
            asm.emit(STORE_TEMP, ("u8", holder))
            asm.jump(JUMP, label("end"))
            asm.here(label("short"))
            asm.emit(PUSH_LIT, ("u16", self._literal(method, sel == "or:")))
            asm.emit(STORE_TEMP, ("u8", holder))
            asm.here(label("end"))
            asm.emit(PUSH_TEMP, ("u8", holder))
            return True
        if sel in ("whileTrue:", "whileFalse:") and len(args) == 1 and \
                isinstance(node.receiver, Block) and not node.receiver.params and \
                isinstance(args[0], Block) and not args[0].params:
            asm.here(label("loop"))
            self._inline_block(asm, scope, method, node.receiver)
            asm.jump(JUMP_FALSE if sel == "whileTrue:" else JUMP_TRUE, label("end"))
            self._inline_block(asm, scope, method, args[0])
            asm.emit(POP)
            asm.jump(JUMP, label("loop"))
            asm.here(label("end"))
            asm.emit(PUSH_LIT, ("u16", self._literal(method, None)))
            return True
        if sel == "to:do:" and len(args) == 2 and isinstance(args[1], Block) and \
                len(args[1].params) == 1:
            body = args[1]
            var = scope.add_hidden_temp()
            limit = scope.add_hidden_temp()
            self._expression(asm, scope, method, node.receiver)
            asm.emit(STORE_TEMP, ("u8", var))
            self._expression(asm, scope, method, args[0])
            asm.emit(STORE_TEMP, ("u8", limit))
            asm.here(label("loop"))
            asm.emit(PUSH_TEMP, ("u8", var))
            asm.emit(PUSH_TEMP, ("u8", limit))
            self._emit_send(asm, method, SEND, "<=", 1)
            asm.jump(JUMP_FALSE, label("end"))
            overlay = {body.params[0]: ("temp", var)}
            for t in body.temps:
                overlay[t] = ("temp", scope.add_hidden_temp())
            scope.overlays.append(overlay)
            for stmt in body.body:
                self._statement(asm, scope, method, stmt)
            scope.overlays.pop()
            asm.emit(PUSH_TEMP, ("u8", var))
            asm.emit(PUSH_LIT, ("u16", self._literal(method, 1)))
            self._emit_send(asm, method, SEND, "+", 1)
            asm.emit(STORE_TEMP, ("u8", var))
            asm.jump(JUMP, label("loop"))
            asm.here(label("end"))
            asm.emit(PUSH_LIT, ("u16", self._literal(method, None)))
            return True
        return False

    def _inline_block(self, asm, scope, method, block):
        """Compile a literal block's body in the enclosing scope; pushes a value."""
        overlay = {}
        for t in block.temps:
            overlay[t] = ("temp", scope.add_hidden_temp())
        scope.overlays.append(overlay)
        if not block.body:
            asm.emit(PUSH_LIT, ("u16", self._literal(method, None)))
        else:
            for stmt in block.body[:-1]:
                self._statement(asm, scope, method, stmt)
            last = block.body[-1]
            if isinstance(last, Return):
                if self._closure_depth > 0:
                    raise NonLocalReturnUnsupported(
                        "return would escape a non-inlined block (in %s)" % method.selector)
                self._expression(asm, scope, method, last.value)
                asm.emit(RETURN_TOP)
                # unreachable, but keeps the stack shape uniform for the merge
                asm.emit(PUSH_LIT, ("u16", self._literal(method, None)))
            elif isinstance(last, Assign):
                self._expression(asm, scope, method, last.value)
                self._store(asm, scope, method, last.name, keep=True)
            else:
                self._expression(asm, scope, method, last)
        scope.overlays.pop()

    # -- literals --------------------------------------------------------------------

    def _literal(self, method, value):
        return self._add_literal(method, self._make_literal(value))

    def _make_literal(self, value):
        if value is None:
            return self.literals.nil()
        if value is True or value is False:
            return self.literals.boolean(value)
        if isinstance(value, SymbolLiteral):
            return self.literals.symbol(value.name)
        if isinstance(value, bool):
            return self.literals.boolean(value)
        if isinstance(value, int):
            return self.literals.integer(value)
        if isinstance(value, float):
            return self.literals.float(value)
        if isinstance(value, str):
            return self.literals.string(value)
        if isinstance(value, tuple):
            return self.literals.array(tuple(self._make_literal(v) for v in value))
        raise CompileError("unsupported literal %r" % (value,))

    def _add_literal(self, method, entry):
        for i, existing in enumerate(method.literals):
            if existing == entry or existing is entry:
                return i
        method.literals.append(entry)
        return len(method.literals) - 1


_label_counter = itertools.count()


def _labels():
    base = next(_label_counter)

    def label(name):
        return "%d:%s" % (base, name)
    return label


def _access(access):
    if access is None:
        raise CompileError("unresolvable name")
    return access[0], access[1] if len(access) > 1 else None


def compile_method(ast, slots=None, literals=None, owner=None, transient=False):
    """Compile a Method AST against an owner's slot layout."""
    return _MethodCompiler(literals, slots).compile(ast, owner=owner, transient=transient)


def validate_bytecodes(method):
    """Check instruction boundaries, jump targets, and literal indices."""
    bc = method.bytecodes
    boundaries = set()
    i = 0
    while i < len(bc):
        boundaries.add(i)
        op = bc[i]
        if op not in OP_LENGTHS:
            raise CompileError("unknown opcode %d at %d in %s" % (op, i, method.selector))
        if op in (PUSH_LIT, PUSH_GLOBAL, STORE_GLOBAL):
            idx = struct.unpack_from("<H", bc, i + 1)[0]
            if idx >= len(method.literals):
                raise CompileError("literal index %d out of range" % idx)
        if op in (SEND, SUPER_SEND, META_SEND):
            idx = struct.unpack_from("<H", bc, i + 1)[0]
            if idx >= len(method.selectors):
                raise CompileError("selector index %d out of range" % idx)
        i += OP_LENGTHS[op]
    if i != len(bc):
        raise CompileError("truncated bytecodes in %s" % method.selector)
    i = 0
    while i < len(bc):
        op = bc[i]
        if op in (JUMP, JUMP_FALSE, JUMP_TRUE):
            delta = struct.unpack_from("<h", bc, i + 1)[0]
            target = i + OP_LENGTHS[op] + delta
            if target != len(bc) and target not in boundaries:
                raise CompileError("jump target %d is not an instruction" % target)
        i += OP_LENGTHS[op]
    for sub in method.block_methods:
        validate_bytecodes(sub)
    return True
