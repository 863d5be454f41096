"""Recursive-descent parser: unary > binary > keyword precedence."""

from ..errors import ParseError
from . import lexer as lx
from .astnodes import (
    Assign, Block, Cascade, Ident, Literal, Method, Pragma, Return, Send, SymbolLiteral,
)

KEYWORD_CONTROL = {"ifTrue:", "ifFalse:", "ifTrue:ifFalse:", "ifFalse:ifTrue:",
                   "whileTrue:", "whileFalse:", "to:do:", "and:", "or:"}


class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    @property
    def tok(self):
        return self.tokens[self.pos]

    def next(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def at(self, type_, value=None):
        t = self.tok
        return t.type == type_ and (value is None or t.value == value)

    def expect(self, type_, value=None, expected=()):
        if not self.at(type_, value):
            raise ParseError("unexpected %s %r" % (self.tok.type, self.tok.value),
                             self.tok.line, self.tok.column,
                             expected or [value or type_])
        return self.next()

    def fail(self, message, expected=()):
        raise ParseError(message, self.tok.line, self.tok.column, expected)

    # -- method --------------------------------------------------------------

    def parse_method(self, source=None):
        selector, params = self.parse_pattern()
        pragmas = self.parse_pragmas()
        temps = self.parse_temps()
        pragmas += self.parse_pragmas()
        body = self.parse_statements(end={lx.EOF})
        self.expect(lx.EOF)
        return Method(selector, params, temps, body, pragmas, source)

    def parse_pattern(self):
        t = self.tok
        if t.type in (lx.IDENT, lx.METAIDENT):
            self.next()
            return t.value, []
        if t.type in (lx.KEYWORD, lx.METAKEYWORD):
            selector = ""
            params = []
            while self.tok.type in (lx.KEYWORD, lx.METAKEYWORD):
                selector += self.next().value
                params.append(self.expect(lx.IDENT, expected=["parameter name"]).value)
            return selector, params
        if t.type == lx.BINSEL:
            self.next()
            return t.value, [self.expect(lx.IDENT, expected=["parameter name"]).value]
        self.fail("method pattern expected", ["unary", "binary", "keyword selector"])

    def parse_pragmas(self):
        pragmas = []
        while self.at(lx.BINSEL, "<"):
            self.next()
            parts = []
            depth = 0
            while True:
                t = self.tok
                if t.type == lx.EOF:
                    self.fail("unterminated pragma", [">"])
                if t.type == lx.BINSEL and t.value == ">" and depth == 0:
                    self.next()
                    break
                if t.type in (lx.LPAREN, lx.LBRACKET, lx.HASHPAREN):
                    depth += 1
                elif t.type in (lx.RPAREN, lx.RBRACKET):
                    depth -= 1
                self.next()
                if t.type == lx.SYMBOL:
                    parts.append("#" + t.value)
                elif t.type == lx.STRING:
                    parts.append("'%s'" % t.value.replace("'", "''"))
                else:
                    parts.append(str(t.value))
            pragmas.append(Pragma(parts))
        return pragmas

    def parse_temps(self):
        if not self.at(lx.BINSEL, "|"):
            return []
        self.next()
        temps = []
        while self.tok.type == lx.IDENT:
            temps.append(self.next().value)
        if self.at(lx.BINSEL, "||"):
            self.fail("malformed temporaries", ["|"])
        self.expect(lx.BINSEL, "|", expected=["|"])
        return temps

    # -- statements ------------------------------------------------------------

    def parse_statements(self, end):
        stmts = []
        while True:
            t = self.tok
            if t.type in end:
                break
            if t.type == lx.CARET:
                self.next()
                stmts.append(Return(self.parse_expression()))
                if self.at(lx.DOT):
                    self.next()
                if self.tok.type not in end:
                    self.fail("statements after return", ["end of body"])
                break
            stmts.append(self.parse_expression())
            if self.at(lx.DOT):
                self.next()
                continue
            if self.tok.type in end:
                break
            self.fail("statement separator expected", [".", "end of body"])
        return stmts

    # -- expressions -------------------------------------------------------------

    def parse_expression(self):
        if self.tok.type == lx.IDENT and \
                self.tokens[self.pos + 1].type == lx.ASSIGN:
            name = self.next().value
            self.next()
            return Assign(name, self.parse_expression())
        expr = self.parse_keyword_expression()
        if self.at(lx.SEMI):
            expr = self.parse_cascade(expr)
        return expr

    def parse_cascade(self, first):
        # the cascade receiver is the receiver of the last message parsed
        if not isinstance(first, Send) or first.is_super:
            self.fail("cascade requires a message send on its left")
        receiver = first.receiver
        messages = [(first.selector, first.args)]
        while self.at(lx.SEMI):
            self.next()
            t = self.tok
            if t.type == lx.IDENT:
                self.next()
                messages.append((t.value, []))
            elif t.type == lx.KEYWORD:
                selector = ""
                args = []
                while self.tok.type == lx.KEYWORD:
                    selector += self.next().value
                    args.append(self.parse_binary_expression())
                messages.append((selector, args))
            else:
                self.fail("cascade message expected", ["unary", "keyword selector"])
        return Cascade(receiver, messages)

    def parse_keyword_expression(self):
        receiver = self.parse_binary_expression()
        if self.tok.type not in (lx.KEYWORD, lx.METAKEYWORD):
            return receiver
        selector = ""
        args = []
        meta = False
        while self.tok.type in (lx.KEYWORD, lx.METAKEYWORD):
            t = self.next()
            meta = meta or t.type == lx.METAKEYWORD
            selector += t.value
            args.append(self.parse_binary_expression())
        return self.make_send(receiver, selector, args, meta)

    def parse_binary_expression(self):
        left = self.parse_unary_expression()
        while self.tok.type == lx.BINSEL:
            op = self.next().value
            right = self.parse_unary_expression()
            left = self.make_send(left, op, [right], False)
        return left

    def parse_unary_expression(self):
        expr = self.parse_primary()
        while self.tok.type in (lx.IDENT, lx.METAIDENT) and \
                self.tokens[self.pos + 1].type != lx.ASSIGN:
            t = self.next()
            expr = self.make_send(expr, t.value, [], t.type == lx.METAIDENT)
        return expr

    def make_send(self, receiver, selector, args, meta):
        is_super = isinstance(receiver, Ident) and receiver.name == "super"
        return Send(receiver, selector, args, is_super=is_super, is_meta=meta)

    def parse_primary(self):
        t = self.tok
        if t.type == lx.IDENT:
            self.next()
            if t.value == "nil":
                return Literal(None)
            if t.value == "true":
                return Literal(True)
            if t.value == "false":
                return Literal(False)
            return Ident(t.value)
        if t.type == lx.METAIDENT:
            self.fail("metamessage %r has no receiver" % t.value)
        if t.type == lx.INT or t.type == lx.FLOAT:
            self.next()
            return Literal(t.value)
        if t.type == lx.STRING:
            self.next()
            return Literal(t.value)
        if t.type == lx.SYMBOL:
            self.next()
            return Literal(SymbolLiteral(t.value))
        if t.type == lx.HASHPAREN:
            self.next()
            return Literal(self.parse_literal_array())
        if t.type == lx.LPAREN:
            self.next()
            expr = self.parse_expression()
            self.expect(lx.RPAREN, expected=[")"])
            return expr
        if t.type == lx.LBRACKET:
            return self.parse_block()
        self.fail("primary expression expected",
                  ["identifier", "literal", "(", "[", "block"])

    def parse_literal_array(self):
        items = []
        while True:
            t = self.tok
            if t.type == lx.RPAREN:
                self.next()
                return tuple(items)
            if t.type == lx.EOF:
                self.fail("unterminated literal array", [")"])
            if t.type == lx.INT or t.type == lx.FLOAT or t.type == lx.STRING:
                self.next()
                items.append(t.value)
            elif t.type == lx.SYMBOL:
                self.next()
                items.append(SymbolLiteral(t.value))
            elif t.type in (lx.IDENT, lx.METAIDENT):
                self.next()
                if t.value == "nil":
                    items.append(None)
                elif t.value == "true":
                    items.append(True)
                elif t.value == "false":
                    items.append(False)
                else:
                    items.append(SymbolLiteral(t.value))
            elif t.type in (lx.KEYWORD, lx.METAKEYWORD):
                name = ""
                while self.tok.type in (lx.KEYWORD, lx.METAKEYWORD):
                    name += self.next().value
                items.append(SymbolLiteral(name))
            elif t.type == lx.HASHPAREN:
                self.next()
                items.append(self.parse_literal_array())
            elif t.type == lx.BINSEL:
                self.next()
                items.append(SymbolLiteral(t.value))
            else:
                self.fail("literal expected in array", [")"])

    def parse_block(self):
        self.expect(lx.LBRACKET)
        params = []
        while self.at(lx.COLON):
            self.next()
            params.append(self.expect(lx.IDENT, expected=["block parameter"]).value)
        if params:
            self.expect(lx.BINSEL, "|", expected=["|"])
        temps = self.parse_temps()
        body = self.parse_statements(end={lx.RBRACKET})
        self.expect(lx.RBRACKET, expected=["]"])
        return Block(params, temps, body)


def parse_method(source):
    """Parse a complete method definition (pattern + body)."""
    return Parser(lx.tokenize(source)).parse_method(source)


def parse_expression_body(source):
    """Parse a statement sequence (the body of an evaluation)."""
    p = Parser(lx.tokenize(source))
    temps = p.parse_temps()
    body = p.parse_statements(end={lx.EOF})
    p.expect(lx.EOF)
    return temps, body
