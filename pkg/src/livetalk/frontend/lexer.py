"""Tokenizer for the hosted language."""

from ..errors import LexError

BINARY_CHARS = set("+-*/\\~<>=&|@%,?!")

# token types
IDENT = "ident"
KEYWORD = "keyword"          # trailing colon included in value
BINSEL = "binsel"
METAIDENT = "metaident"      # leading underscore
METAKEYWORD = "metakeyword"
INT = "int"
FLOAT = "float"
STRING = "string"
SYMBOL = "symbol"
CARET = "caret"
ASSIGN = "assign"
DOT = "dot"
SEMI = "semi"
COLON = "colon"
LPAREN = "lparen"
RPAREN = "rparen"
LBRACKET = "lbracket"
RBRACKET = "rbracket"
HASHPAREN = "hashparen"
EOF = "eof"

_OPERAND_END = {IDENT, INT, FLOAT, STRING, SYMBOL, RPAREN, RBRACKET, METAIDENT}


class Token:
    __slots__ = ("type", "value", "line", "column")

    def __init__(self, type_, value, line, column):
        self.type = type_
        self.value = value
        self.line = line
        self.column = column

    def __repr__(self):
        return "Token(%s, %r)" % (self.type, self.value)

    def __eq__(self, other):
        return isinstance(other, Token) and (self.type, self.value) == (other.type, other.value)


def tokenize(source):
    """Return the token list for source, raising LexError with position."""
    tokens = []
    i = 0
    n = len(source)
    line = 1
    col = 1

    def advance(k=1):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    def emit(type_, value, l, c):
        tokens.append(Token(type_, value, l, c))

    while i < n:
        ch = source[i]
        l, c = line, col
        if ch in " \t\r\n":
            advance()
            continue
        if ch == '"':
            advance()
            while True:
                if i >= n:
                    raise LexError("unterminated comment", l, c)
                if source[i] == '"':
                    if i + 1 < n and source[i + 1] == '"':
                        advance(2)
                        continue
                    advance()
                    break
                advance()
            continue
        if ch == "'":
            advance()
            buf = []
            while True:
                if i >= n:
                    raise LexError("unterminated string", l, c)
                if source[i] == "'":
                    if i + 1 < n and source[i + 1] == "'":
                        buf.append("'")
                        advance(2)
                        continue
                    advance()
                    break
                buf.append(source[i])
                advance()
            emit(STRING, "".join(buf), l, c)
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()
                            and (not tokens or tokens[-1].type not in _OPERAND_END)):
            j = i + (1 if ch == "-" else 0)
            while j < n and source[j].isdigit():
                j += 1
            is_float = False
            if j + 1 < n and source[j] == "." and source[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] == "e" and j + 1 < n and \
                    (source[j + 1].isdigit() or (source[j + 1] == "-" and j + 2 < n and source[j + 2].isdigit())):
                is_float = True
                j += 2
                while j < n and source[j].isdigit():
                    j += 1
            text = source[i:j]
            if is_float:
                emit(FLOAT, float(text), l, c)
            else:
                emit(INT, int(text), l, c)
            advance(j - i)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            name = source[i:j]
            meta = name.startswith("_")
            if j < n and source[j] == ":" and not (j + 1 < n and source[j + 1] == "="):
                emit(METAKEYWORD if meta else KEYWORD, name + ":", l, c)
                advance(j - i + 1)
            else:
                emit(METAIDENT if meta else IDENT, name, l, c)
                advance(j - i)
            continue
        if ch == "#":
            if i + 1 < n and source[i + 1] == "(":
                emit(HASHPAREN, "#(", l, c)
                advance(2)
                continue
            j = i + 1
            if j < n and (source[j].isalpha() or source[j] == "_"):
                while j < n and (source[j].isalnum() or source[j] == "_" or source[j] == ":"):
                    j += 1
                emit(SYMBOL, source[i + 1:j], l, c)
                advance(j - i)
                continue
            if j < n and source[j] in BINARY_CHARS:
                k = j
                while k < n and source[k] in BINARY_CHARS:
                    k += 1
                emit(SYMBOL, source[j:k], l, c)
                advance(k - i)
                continue
            raise LexError("dangling #", l, c)
        if ch == "^":
            emit(CARET, "^", l, c)
            advance()
            continue
        if ch == ":":
            if i + 1 < n and source[i + 1] == "=":
                emit(ASSIGN, ":=", l, c)
                advance(2)
            else:
                emit(COLON, ":", l, c)
                advance()
            continue
        if ch == ".":
            emit(DOT, ".", l, c)
            advance()
            continue
        if ch == ";":
            emit(SEMI, ";", l, c)
            advance()
            continue
        if ch == "(":
            emit(LPAREN, "(", l, c)
            advance()
            continue
        if ch == ")":
            emit(RPAREN, ")", l, c)
            advance()
            continue
        if ch == "[":
            emit(LBRACKET, "[", l, c)
            advance()
            continue
        if ch == "]":
            emit(RBRACKET, "]", l, c)
            advance()
            continue
        if ch in BINARY_CHARS:
            j = i
            while j < n and source[j] in BINARY_CHARS and j - i < 3:
                j += 1
            emit(BINSEL, source[i:j], l, c)
            advance(j - i)
            continue
        raise LexError("unexpected character %r" % ch, l, c)
    tokens.append(Token(EOF, None, line, col))
    return tokens
