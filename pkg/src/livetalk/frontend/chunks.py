"""Kernel/source file format.

UTF-8 text. Method chunks are introduced by a line `!Behavior methods!`
(or `!Behavior class methods!`) and terminated by a line containing only
`!`; one method per chunk. Class-definition statements and doIt statements
appear outside chunks, one per line group terminated by a period at end of
line. Full-line comments are double-quoted.
"""

from dataclasses import dataclass

from ..errors import BootstrapError


@dataclass
class ClassDefinition:
    superclass: str          # name, or "nil" for the root
    name: str
    slots: tuple
    layout: str              # fixed | variable | bytes
    line: int


@dataclass
class MethodChunk:
    behavior: str
    class_side: bool
    source: str
    line: int

    @property
    def label(self):
        side = " class" if self.class_side else ""
        first = self.source.strip().splitlines()[0] if self.source.strip() else "?"
        return "%s%s>>%s" % (self.behavior, side, first.strip())


@dataclass
class DoIt:
    source: str
    line: int


_CLASS_KEYWORDS = {
    "subclass:slots:": "fixed",
    "variableSubclass:": "variable",
    "byteVariableSubclass:": "bytes",
}


def parse_chunks(text, origin="<source>"):
    """Split chunk-format source into definitions, method chunks, and doIts."""
    items = []
    lines = text.splitlines()
    i = 0
    n = len(lines)
    while i < n:
        raw = lines[i]
        line = raw.strip()
        if not line or _is_comment_line(line):
            i += 1
            continue
        if line.startswith("!"):
            header = line[1:].rstrip()
            if not header.endswith("!"):
                raise BootstrapError("malformed chunk header at %s:%d" % (origin, i + 1))
            header = header[:-1].strip()
            parts = header.split()
            if len(parts) == 2 and parts[1] == "methods":
                behavior, class_side = parts[0], False
            elif len(parts) == 3 and parts[1] == "class" and parts[2] == "methods":
                behavior, class_side = parts[0], True
            else:
                raise BootstrapError("unrecognized chunk header %r at %s:%d"
                                     % (line, origin, i + 1))
            start = i + 1
            body = []
            i += 1
            while i < n and lines[i].strip() != "!":
                body.append(lines[i])
                i += 1
            if i >= n:
                raise BootstrapError("unterminated chunk %r at %s:%d" % (header, origin, start))
            i += 1
            items.append(MethodChunk(behavior, class_side, "\n".join(body).strip("\n"),
                                     start + 1))
            continue
        # a plain statement line: class definition or doIt
        stmt_lines = [raw]
        start = i
        while not stmt_lines[-1].rstrip().endswith(".") and i + 1 < n and \
                lines[i + 1].strip() and not lines[i + 1].lstrip().startswith("!"):
            i += 1
            stmt_lines.append(lines[i])
        i += 1
        source = "\n".join(stmt_lines).strip()
        if source.endswith("."):
            source = source[:-1]
        definition = _parse_class_definition(source, start + 1)
        items.append(definition if definition else DoIt(source, start + 1))
    return items


def _is_comment_line(line):
    return line.startswith('"') and line.endswith('"') and len(line) >= 2


def _parse_class_definition(source, line):
    from . import lexer as lx
    try:
        tokens = lx.tokenize(source)
    except Exception:
        return None
    if len(tokens) < 4 or tokens[0].type != lx.IDENT or tokens[1].type != lx.KEYWORD:
        return None
    selector = "".join(t.value for t in tokens if t.type == lx.KEYWORD)
    if selector not in _CLASS_KEYWORDS:
        return None
    layout = _CLASS_KEYWORDS[selector]
    superclass = tokens[0].value
    if tokens[2].type != lx.SYMBOL:
        raise BootstrapError("class definition needs a symbol name at line %d" % line)
    name = tokens[2].value
    slots = ()
    if layout == "fixed":
        if len(tokens) < 6 or tokens[3].type != lx.KEYWORD or tokens[3].value != "slots:":
            raise BootstrapError("missing slots: in definition of %s" % name)
        if tokens[4].type == lx.HASHPAREN:
            j = 5
            names = []
            while tokens[j].type != lx.RPAREN:
                if tokens[j].type not in (lx.IDENT, lx.SYMBOL):
                    raise BootstrapError("bad slot list in definition of %s" % name)
                names.append(tokens[j].value)
                j += 1
            slots = tuple(names)
        else:
            raise BootstrapError("slots: expects a literal array in %s" % name)
    return ClassDefinition(superclass, name, slots, layout, line)
