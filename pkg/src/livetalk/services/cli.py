"""Command line interface: run a program, a REPL, or the benchmarks."""

import argparse
import json
import sys

from ..errors import BootstrapError, VMError
from ..frontend import parse_chunks
from ..frontend.chunks import ClassDefinition, DoIt, MethodChunk
from ..kernel.bootstrap import boot, install_chunk
from ..memory import GCConfig
from .inspector import InspectorServer
from .live import BenchmarkFailure, repl_eval_safely, run_benchmarks

EXIT_OK = 0
EXIT_HOSTED_ERROR = 1
EXIT_USAGE = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="livetalk",
                                     description="a live Smalltalk-style runtime")
    parser.add_argument("--eden-size", type=int, default=256 * 1024)
    parser.add_argument("--survivor-size", type=int, default=64 * 1024)
    parser.add_argument("--old-area-size", type=int, default=64 * 1024)
    parser.add_argument("--tenure-age", type=int, default=2)
    parser.add_argument("--growth-factor", type=float, default=1.5)
    parser.add_argument("--inspector-port", type=int, default=None)
    parser.add_argument("--gc-log", action="store_true",
                        help="stream one JSON object per GC pass to stderr")
    parser.add_argument("--dump-stats", metavar="PATH", default=None,
                        help="write the full pass log as a JSON array at exit")
    parser.add_argument("--no-inline-cache", action="store_true")
    parser.add_argument("--no-code-cache", action="store_true")
    parser.add_argument("--simd", choices=("on", "off"), default="on")
    sub = parser.add_subparsers(dest="command")
    run_p = sub.add_parser("run", help="execute a hosted program file")
    run_p.add_argument("file")
    sub.add_parser("repl", help="interactive evaluation")
    bench_p = sub.add_parser("bench", help="run bundled benchmarks")
    bench_p.add_argument("names", nargs="*")
    bench_p.add_argument("--iterations", type=int, default=5)
    return parser


def make_runtime(args):
    config = GCConfig(eden_size=args.eden_size, survivor_size=args.survivor_size,
                      old_area_size=args.old_area_size, tenure_age=args.tenure_age,
                      growth_factor=args.growth_factor)
    rt = boot(config=config, inline_cache=not args.no_inline_cache,
              cache_enabled=not args.no_code_cache, simd=args.simd == "on")
    if args.gc_log:
        def log_sink(record):
            if record["type"] == "gcPass":
                sys.stderr.write(json.dumps(record["payload"]) + "\n")
        for record in rt.event_log:  # passes that ran while booting
            log_sink(record)
        rt.event_sinks.append(log_sink)
    return rt


def load_program(rt, path):
    """File-in a chunk-format program; bare statements run as doIts."""
    text = open(path, encoding="utf-8").read()
    last = rt.nil_oop
    for item in parse_chunks(text, origin=path):
        if isinstance(item, ClassDefinition):
            rt.define_class(item.name, item.superclass, item.slots, item.layout)
        elif isinstance(item, MethodChunk):
            install_chunk(rt, item)
        elif isinstance(item, DoIt):
            last = rt.evaluate(item.source)
    return last


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if not args.command:
        parser.print_usage()
        return EXIT_USAGE
    try:
        rt = make_runtime(args)
    except ValueError as exc:
        sys.stderr.write("bad configuration: %s\n" % exc)
        return EXIT_USAGE
    server = None
    if args.inspector_port is not None:
        server = InspectorServer(rt, port=args.inspector_port).start()
        sys.stderr.write("inspector listening on port %d\n" % server.port)
    try:
        if args.command == "run":
            try:
                result = load_program(rt, args.file)
                print(rt.print_string(result))
                return EXIT_OK
            except FileNotFoundError:
                sys.stderr.write("no such file: %s\n" % args.file)
                return EXIT_USAGE
            except (VMError, BootstrapError) as exc:
                sys.stderr.write("error: %s\n" % exc)
                return EXIT_HOSTED_ERROR
        if args.command == "repl":
            return repl_loop(rt)
        if args.command == "bench":
            try:
                report = run_benchmarks(rt, args.names or None,
                                        iterations=args.iterations)
            except BenchmarkFailure as exc:
                sys.stderr.write("%s\n" % exc)
                return EXIT_HOSTED_ERROR
            except VMError as exc:
                sys.stderr.write("%s\n" % exc)
                return EXIT_USAGE
            for name, row in report.items():
                print("%-8s median %8.3f ms over %d runs (result %s)"
                      % (name, row["medianMillis"], row["iterations"], row["result"]))
            return EXIT_OK
        parser.print_usage()
        return EXIT_USAGE
    finally:
        if server is not None:
            server.stop()
        if args.dump_stats:
            with open(args.dump_stats, "w", encoding="utf-8") as fh:
                json.dump([r.to_dict() for r in rt.memory.gc_stats()], fh, indent=2)


def repl_loop(rt):
    print("livetalk ready; empty line to quit")
    while True:
        try:
            rt.run_pending()
            line = input("> ")
        except (EOFError, KeyboardInterrupt):
            print()
            return EXIT_OK
        if not line.strip():
            return EXIT_OK
        ok, text = repl_eval_safely(rt, line)
        print(text)


if __name__ == "__main__":
    sys.exit(main())
