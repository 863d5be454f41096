"""Canonical source printer; print(parse(s)) reparses to an equal AST."""

from .astnodes import Assign, Block, Cascade, Ident, Literal, Return, Send, SymbolLiteral

# precedence levels for parenthesization
_KEYWORD, _BINARY, _UNARY, _PRIMARY = 0, 1, 2, 3


def print_method(method):
    parts = [_pattern(method)]
    for pragma in method.pragmas:
        parts.append("\t<%s>" % " ".join(pragma.parts))
    if method.temps:
        parts.append("\t| %s |" % " ".join(method.temps))
    for i, stmt in enumerate(method.body):
        sep = "." if i < len(method.body) - 1 else ""
        parts.append("\t%s%s" % (print_statement(stmt), sep))
    return "\n".join(parts)


def _pattern(method):
    if not method.params:
        return method.selector
    if not method.selector.endswith(":"):
        return "%s %s" % (method.selector, method.params[0])
    out = []
    for kw, param in zip(method.selector.split(":")[:-1], method.params):
        out.append("%s: %s" % (kw, param))
    return " ".join(out)


def print_statement(node):
    if isinstance(node, Return):
        return "^" + print_expression(node.value, _KEYWORD)
    return print_expression(node, _KEYWORD)


def print_expression(node, level=_KEYWORD):
    if isinstance(node, Literal):
        return _literal(node.value)
    if isinstance(node, Ident):
        return node.name
    if isinstance(node, Assign):
        text = "%s := %s" % (node.name, print_expression(node.value, _KEYWORD))
        return _paren(text, level > _KEYWORD)
    if isinstance(node, Block):
        return _block(node)
    if isinstance(node, Cascade):
        text = _cascade(node)
        return _paren(text, level > _KEYWORD)
    if isinstance(node, Send):
        return _send(node, level)
    if isinstance(node, Return):
        return "^" + print_expression(node.value, _KEYWORD)
    raise TypeError("cannot print %r" % (node,))


def _send(node, level):
    if not node.args:
        text = "%s %s" % (print_expression(node.receiver, _PRIMARY), node.selector)
        return _paren(text, level > _UNARY)
    if not node.selector.endswith(":"):
        text = "%s %s %s" % (print_expression(node.receiver, _BINARY), node.selector,
                             print_expression(node.args[0], _UNARY))
        return _paren(text, level > _BINARY)
    pieces = []
    for kw, arg in zip(node.selector.split(":")[:-1], node.args):
        pieces.append("%s: %s" % (kw, print_expression(arg, _BINARY)))
    text = "%s %s" % (print_expression(node.receiver, _BINARY), " ".join(pieces))
    return _paren(text, level > _KEYWORD)


def _cascade(node):
    first_sel, first_args = node.messages[0]
    head = _send(Send(node.receiver, first_sel, first_args), _KEYWORD)
    rest = []
    for sel, args in node.messages[1:]:
        if not args:
            rest.append(sel)
        else:
            rest.append(" ".join("%s: %s" % (kw, print_expression(a, _BINARY))
                                 for kw, a in zip(sel.split(":")[:-1], args)))
    return "; ".join([head] + rest)


def _block(node):
    parts = []
    if node.params:
        parts.append(" ".join(":" + p for p in node.params) + " |")
    if node.temps:
        parts.append("| %s |" % " ".join(node.temps))
    body = ". ".join(print_statement(s) for s in node.body)
    if body:
        parts.append(body)
    return "[%s]" % " ".join(parts)


def _literal(value):
    if value is None:
        return "nil"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, SymbolLiteral):
        return "#" + value.name
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return "'%s'" % value.replace("'", "''")
    if isinstance(value, tuple):
        return "#(%s)" % " ".join(_array_item(v) for v in value)
    raise TypeError("cannot print literal %r" % (value,))


def _array_item(value):
    if isinstance(value, SymbolLiteral):
        return value.name
    if isinstance(value, tuple):
        return "#(%s)" % " ".join(_array_item(v) for v in value)
    return _literal(value)


def _paren(text, need):
    return "(%s)" % text if need else text
