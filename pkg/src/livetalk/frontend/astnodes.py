"""AST node classes. Structural equality supports the print/reparse check."""

from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class SymbolLiteral:
    name: str


@dataclass
class Literal:
    value: object  # int | float | str | SymbolLiteral | tuple | None | bool

    def __eq__(self, other):
        return isinstance(other, Literal) and self.value == other.value and \
            type(self.value) is type(other.value)


@dataclass(eq=True)
class Ident:
    name: str


@dataclass(eq=True)
class Assign:
    name: str
    value: object


@dataclass(eq=True)
class Return:
    value: object


@dataclass(eq=True)
class Send:
    receiver: object
    selector: str
    args: list
    is_super: bool = False
    is_meta: bool = False


@dataclass(eq=True)
class Cascade:
    receiver: object            # receiver expression shared by all messages
    messages: list              # list of (selector, args)


@dataclass(eq=True)
class Block:
    params: list
    temps: list
    body: list


@dataclass(eq=True)
class Pragma:
    parts: list                 # raw token values, e.g. ['specialABI:', 'anObject', '->', 'regR']

    @property
    def selector(self):
        return self.parts[0] if self.parts else ""


@dataclass(eq=True)
class Method:
    selector: str
    params: list
    temps: list
    body: list
    pragmas: list = field(default_factory=list)
    source: Optional[str] = None

    def __post_init__(self):
        seen = set()
        for name in list(self.params) + list(self.temps):
            if name in seen:
                raise ValueError("duplicate name %r in method %s" % (name, self.selector))
            seen.add(name)

    def __eq__(self, other):
        if not isinstance(other, Method):
            return NotImplemented
        return (self.selector, self.params, self.temps, self.body, self.pragmas) == \
            (other.selector, other.params, other.temps, other.body, other.pragmas)
