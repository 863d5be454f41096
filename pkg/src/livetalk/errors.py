"""Exception types shared across the runtime."""


class VMError(Exception):
    """Base for all runtime-raised errors."""


# -- object model ------------------------------------------------------------

class OverflowRange(VMError):
    """Integer outside the immediate 63-bit range."""


class NotAHeapObject(VMError):
    """Operation requires a heap reference, got an immediate."""


class OutOfMemory(VMError):
    """Heap exhausted even after a full collection."""


class WrongSpace(VMError):
    """Address does not belong to the expected space."""


class AlignmentError(WrongSpace):
    """Address not aligned to the 16-byte grain."""


class IndexOutOfBounds(VMError):
    """Slot or byte index outside the object's size."""


class NotAtSafepoint(VMError):
    """Heap introspection attempted while the mutator is mid-step."""


class HostValueEscape(VMError):
    """Attempt to store an engine-internal value into the heap."""


# -- frontend ----------------------------------------------------------------

class SourceError(VMError):
    """Error with a source position attached."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = "%s (line %d:%d)" % (message, line, column or 0)
        super().__init__(message)


class LexError(SourceError):
    pass


class ParseError(SourceError):
    def __init__(self, message, line=None, column=None, expected=()):
        self.expected = tuple(expected)
        if self.expected:
            message = "%s; expected one of: %s" % (message, ", ".join(self.expected))
        super().__init__(message, line, column)


class CompileError(SourceError):
    pass


class NonLocalReturnUnsupported(CompileError):
    pass


class BootstrapError(VMError):
    """Kernel source failed to load; carries the offending chunk name."""

    def __init__(self, message, chunk=None):
        self.chunk = chunk
        if chunk:
            message = "%s [chunk: %s]" % (message, chunk)
        super().__init__(message)


# -- engine ------------------------------------------------------------------

class UnknownMetamessage(CompileError):
    pass


class CompileDuringGC(VMError):
    """Fatal diagnostic: nativization requested while a GC pass is active."""


class StaleCode(VMError):
    """Fatal diagnostic: invalidated executable code was entered."""


class RecursiveDNU(VMError):
    """doesNotUnderstandSelector: itself is not understood."""


# -- hosted-level ------------------------------------------------------------

class HostedError(VMError):
    """Error signalled by hosted code (error: or a failed primitive)."""


class DoesNotUnderstand(HostedError):
    def __init__(self, receiver_class_name, selector):
        self.receiver_class_name = receiver_class_name
        self.selector = selector
        super().__init__("%s does not understand #%s" % (receiver_class_name, selector))


class ArithmeticOverflow(HostedError):
    """Boxed integer arithmetic exceeded the 64-bit signed range."""


class NoSuchMethod(VMError):
    pass
