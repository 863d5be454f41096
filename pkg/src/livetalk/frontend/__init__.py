from .lexer import Token, tokenize
from .parser import parse_expression_body, parse_method
from .printer import print_method
from .compiler import compile_method, validate_bytecodes
from .chunks import parse_chunks, ClassDefinition, MethodChunk, DoIt

__all__ = [
    "Token", "tokenize", "parse_method", "parse_expression_body",
    "print_method", "compile_method", "validate_bytecodes",
    "parse_chunks", "ClassDefinition", "MethodChunk", "DoIt",
]
