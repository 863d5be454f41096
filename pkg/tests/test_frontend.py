"""Lexer, parser, printer fixpoint, and the bytecode compiler."""

from pathlib import Path

import pytest

from livetalk.errors import (
    CompileError, LexError, NonLocalReturnUnsupported, ParseError, BootstrapError,
)
from livetalk.frontend import (
    compile_method, parse_chunks, parse_method, print_method, tokenize,
    validate_bytecodes,
)
from livetalk.frontend import compiler as bc
from livetalk.frontend.astnodes import Block, Literal, Method, Return, Send
from livetalk.frontend.chunks import ClassDefinition, MethodChunk
from livetalk.frontend.parser import parse_expression_body

LISTINGS = Path(__file__).parent / "listings"

SLOT_MAP = {
    "EdenCollector": ["forwarders", "spaceBase"],
    "SendSite": ["selector"],
    "NativizationEnvironment": ["cache", "methodNativizer"],
    "BitsAt": ["left", "right"],
    "Memory": ["edenSpace", "fromSpace", "toSpace", "scratchSpace"],
    "X64CodeEmitter": ["allocation", "left", "right"],
    "TestSuite": ["tests"],
}


# -- lexer ----------------------------------------------------------------------

def test_tokenize_meta_send_line():
    tokens = tokenize("^self _isSmall")
    assert [(t.type, t.value) for t in tokens[:-1]] == [
        ("caret", "^"), ("ident", "self"), ("metaident", "_isSmall")]


def test_tokenize_empty():
    assert [t for t in tokenize("") if t.type != "eof"] == []


def test_tokenize_numbers_and_binary():
    tokens = tokenize("3 + 4.0")
    assert [(t.type, t.value) for t in tokens[:-1]] == [
        ("int", 3), ("binsel", "+"), ("float", 4.0)]


def test_tokenize_unterminated_string_reports_position():
    with pytest.raises(LexError) as err:
        tokenize("x := 'oops")
    assert err.value.line == 1


def test_tokenize_unterminated_comment():
    with pytest.raises(LexError):
        tokenize('"never closed')


def test_tokenize_keywords_symbols_assign():
    tokens = tokenize("at: 1 put: #foo. x := #(1 y)")
    types = [t.type for t in tokens[:-1]]
    assert types == ["keyword", "int", "keyword", "symbol", "dot",
                     "ident", "assign", "hashparen", "int", "ident", "rparen"]


# -- parser ------------------------------------------------------------------------

def test_parse_listing_size_shape():
    ast = parse_method("size\n\t^self _isSmall ifTrue: [self _smallSize] "
                       "ifFalse: [self _largeSize]")
    assert ast.selector == "size"
    assert len(ast.body) == 1
    ret = ast.body[0]
    assert isinstance(ret, Return)
    outer = ret.value
    assert isinstance(outer, Send) and outer.selector == "ifTrue:ifFalse:"
    assert isinstance(outer.receiver, Send) and outer.receiver.is_meta
    assert outer.receiver.selector == "_isSmall"
    assert all(isinstance(a, Block) for a in outer.args)
    assert outer.args[0].body[0].selector == "_smallSize"


def test_parse_constant_return():
    ast = parse_method("foo ^42")
    assert isinstance(ast.body[0], Return)
    assert ast.body[0].value == Literal(42)


def test_parse_binary_method_with_temps():
    source = ("+ aNumber\n\t| result |\n"
              "\taNumber _isSmallInteger ifFalse: [^aNumber + self].\n"
              "\tresult := self _smiPlus: aNumber.\n"
              "\t^result _overflowed\n"
              "\t\tifTrue: [self asLargeInteger + aNumber]\n"
              "\t\tifFalse: [result]")
    ast = parse_method(source)
    assert ast.selector == "+"
    assert ast.params == ["aNumber"]
    assert ast.temps == ["result"]
    assert len(ast.body) == 3


def test_parse_precedence_unary_binary_keyword():
    _, body = parse_expression_body("a foo + b bar baz: c qux + 1")
    send = body[0]
    assert send.selector == "baz:"
    assert send.receiver.selector == "+"
    assert send.receiver.receiver.selector == "foo"
    assert send.args[0].selector == "+"


def test_parse_error_carries_position_and_expectations():
    with pytest.raises(ParseError) as err:
        parse_method("foo ^)")
    assert err.value.expected
    assert err.value.line == 1


def test_parse_duplicate_parameter_rejected():
    with pytest.raises(Exception):
        parse_method("at: x put: x ^x")


def test_parse_cascade():
    _, body = parse_expression_body("self collectYoung; disableGC")
    cascade = body[0]
    assert [sel for sel, _ in cascade.messages] == ["collectYoung", "disableGC"]


def test_parse_pragma_recorded_on_ast():
    ast = parse_method("f\n\t<specialABI: anObject -> regR>\n\t^1")
    assert ast.pragmas and ast.pragmas[0].selector == "specialABI:"
    assert "regR" in ast.pragmas[0].parts


# -- print/parse fixpoint --------------------------------------------------------------

ROUNDTRIP_SOURCES = [
    "size ^self _isSmall ifTrue: [self _smallSize] ifFalse: [self _largeSize]",
    "foo ^1 + 2 * 3",
    "at: i put: v | t | t := v. slot := t. ^self",
    "run tests do: [:t | t value]",
    "f ^#(1 2.5 'x' sym #(nested true)) size",
    "g ^[:a :b | | t | t := a + b. t] value: 1 value: 2",
    "h self collectYoung; disableGC. ^nil",
    "neg ^-3 + (0 - 4)",
    "w [x < 3] whileTrue: [x := x + 1]. ^'done'",
    "k ^(a and: [b or: [c]]) not",
]


@pytest.mark.parametrize("source", ROUNDTRIP_SOURCES)
def test_print_then_reparse_is_fixpoint(source):
    ast = parse_method(source)
    printed = print_method(ast)
    again = parse_method(printed)
    assert again == ast
    assert parse_method(print_method(again)) == again


def test_kernel_sources_roundtrip():
    from livetalk.kernel.bootstrap import KERNEL_FILES, ST_DIR
    for name in KERNEL_FILES:
        for item in parse_chunks((ST_DIR / name).read_text(), origin=name):
            if isinstance(item, MethodChunk):
                ast = parse_method(item.source)
                assert parse_method(print_method(ast)) == ast, item.label


# -- compiler -------------------------------------------------------------------------------

def test_compile_plus_literal_oracle():
    # hand-assembled oracle for the chosen bytecode set
    method = compile_method(parse_method("foo ^1 + 2"))
    expected = bytes([
        bc.PUSH_LIT, 0, 0,
        bc.PUSH_LIT, 1, 0,
        bc.SEND, 0, 0, 1,
        bc.RETURN_TOP,
        bc.RETURN_SELF,
    ])
    assert method.bytecodes == expected
    assert method.selectors == ["+"]


def test_compile_inlined_conditional_creates_no_closure():
    source = ("+ aNumber\n"
              "\taNumber _isSmallInteger ifFalse: [^aNumber + self].\n"
              "\t^self")
    method = compile_method(parse_method(source))
    assert method.block_methods == []
    assert bc.MAKE_CLOSURE not in method.bytecodes
    assert method.bytecodes.count(bc.JUMP_TRUE) + \
        method.bytecodes.count(bc.JUMP_FALSE) >= 1


def test_compile_non_inlined_block_creates_closure():
    method = compile_method(parse_method("bar ^[:x | x] value: 7"))
    assert len(method.block_methods) == 1
    assert method.bytecodes[0] == bc.MAKE_CLOSURE


def test_compile_rejects_return_escaping_closure():
    with pytest.raises(NonLocalReturnUnsupported):
        compile_method(parse_method("bar ^[^3] value"))
    with pytest.raises(NonLocalReturnUnsupported):
        compile_method(parse_method("bar ^[:x | x > 1 ifTrue: [^3]. x] value: 2"))


def test_compile_rejects_undeclared_assignment_to_parameter():
    with pytest.raises(CompileError):
        compile_method(parse_method("foo: a a := 3"))


def test_compile_rejects_capture_assignment():
    with pytest.raises(CompileError):
        compile_method(parse_method("foo | s | s := 1. ^[s := 2] value"))


def test_jump_targets_are_instruction_boundaries():
    sources = [
        "w | x | x := 0. [x < 10] whileTrue: [x := x + 1]. ^x",
        "f ^(1 < 2) ifTrue: ['a'] ifFalse: ['b']",
        "g | s | s := 0. 1 to: 9 do: [:i | s := s + i]. ^s",
        "h ^(a and: [b]) or: [c]",
    ]
    for source in sources:
        method = compile_method(parse_method(source))
        assert validate_bytecodes(method)


def test_metamessage_send_gets_its_own_instruction():
    method = compile_method(parse_method("f ^self _isSmall"))
    assert bc.META_SEND in method.bytecodes
    assert method.uses_metamessages


# -- class definitions / chunks ---------------------------------------------------------------------

def test_class_definition_parses():
    items = parse_chunks("Object subclass: #Point slots: #(x y).")
    assert items == [ClassDefinition("Object", "Point", ("x", "y"), "fixed", 1)]


def test_class_definition_unknown_superclass_errors(rt):
    with pytest.raises(BootstrapError):
        rt.define_class("Bar", "Foo__undefined", ())


def test_class_redefinition_keeps_identity(rt):
    rt.define_class("Point", "Object", ("x", "y"))
    first = rt.behaviors["Point"]
    rt.define_class("Point", "Object", ("x", "y"))
    assert rt.behaviors["Point"] is first


def test_chunk_format_errors():
    with pytest.raises(BootstrapError):
        parse_chunks("!Point methods!\nx\n\t^x\n")  # unterminated
    with pytest.raises(BootstrapError):
        parse_chunks("!Point strange header!\n!\n")


# -- the transliteration corpus ------------------------------------------------------------------------

def test_all_listings_parse_and_compile():
    text = (LISTINGS / "corpus.st").read_text()
    chunks = [c for c in parse_chunks(text, origin="corpus.st")
              if isinstance(c, MethodChunk)]
    assert len(chunks) >= 25
    for chunk in chunks:
        ast = parse_method(chunk.source)
        method = compile_method(ast, slots=SLOT_MAP.get(chunk.behavior, []))
        validate_bytecodes(method)
